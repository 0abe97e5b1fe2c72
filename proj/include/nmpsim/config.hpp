#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nmpsim/agent.hpp"
#include "nmpsim/memnet.hpp"
#include "nmpsim/offload.hpp"
#include "nmpsim/paging.hpp"
#include "nmpsim/trace.hpp"

namespace nmpsim::harness {

enum class Remapper : uint8_t { NONE, TOM, AIMM };
const char* remapper_name(Remapper r);
std::optional<Remapper> remapper_from_name(const std::string& s);

struct TraceSpec {
    std::string file;                              // one of file / generator
    std::optional<trace::KernelKind> generate;
    uint64_t n = 0;
    std::optional<uint64_t> seed;                  // defaults to sim seed + index
};

struct SimConfig {
    memnet::MeshConfig mesh;

    struct Cube {
        uint64_t capacity_bytes = 1ULL << 30;
        memnet::CubeGeometry geometry;
        memnet::CubeTiming timing;
        int nmp_table_entries = 512;
        int compute_width = 2;
    } cube;

    struct Paging {
        uint64_t page_size = 4096;
        paging::AllocPolicy policy = paging::AllocPolicy::DEFAULT;
        uint32_t migration_queue = 128;
        int dma_channels = 1;
        int os_interrupt_cycles = 50;
        uint64_t hoard_chunk_frames = 64;
    } paging;

    struct Offload {
        offload::Technique technique = offload::Technique::BNMP;
        Remapper remapper = Remapper::NONE;
        uint32_t page_info_entries = 128;
        uint32_t history_len = 4;
        uint32_t mc_queue = 64;
        uint32_t remap_entries = 256;
        uint64_t tom_epoch_cycles = 1000;
        int report_period = 32;        // cube->MC status reporting cadence
        uint64_t access_aging_cycles = 2000;  // page-info counter halving period (0 = off)
    } offload;

    agent::AgentConfig agent;
    bool agent_async_train = false;  // reserved; only the sync mode exists
    std::string checkpoint_in;
    std::string checkpoint_out;

    struct Sim {
        int cores = 16;
        int mshr = 16;
        uint64_t cache_bytes = 32768;
        int cache_line = 64;
        int cache_ways = 8;
        int issue_width = 4;
        int repeats = 0;  // 0 = auto: 5 single-program, 10 multi-program
        uint64_t seed = 1;
        uint64_t max_cycles = 0;  // 0 = auto guard
        bool allow_many_processes = false;
    } sim;

    std::vector<TraceSpec> traces;

    void validate() const;
    int effective_repeats(size_t process_count) const;
};

// Line-oriented `section.key = value` text; `#` comments; unknown keys are
// rejected (closed world).
SimConfig parse_config(const std::string& text);
SimConfig load_config_file(const std::string& path);

}  // namespace nmpsim::harness
