#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "nmpsim/memnet.hpp"
#include "nmpsim/paging.hpp"
#include "nmpsim/trace.hpp"

namespace nmpsim::offload {

using paging::PageKey;

enum class Technique : uint8_t { BNMP, LDB, PEI };

const char* technique_name(Technique t);
std::optional<Technique> technique_from_name(const std::string& s);

// Fixed-length most-recent-first history ring; empty slots read as zero.
class HistoryRing {
  public:
    explicit HistoryRing(uint32_t len = 4) : len_(len) {}
    void push(double v);
    // newest first, zero padded to length
    std::vector<double> snapshot() const;
    uint32_t length() const { return len_; }
    uint32_t filled() const { return uint32_t(vals_.size()); }

  private:
    uint32_t len_;
    std::deque<double> vals_;  // front = newest
};

struct PageInfoEntry {
    PageKey page;
    uint64_t access_count = 0;
    uint64_t migration_count = 0;
    HistoryRing hop_history;
    HistoryRing latency_history;
    HistoryRing migration_latency_history;
    HistoryRing action_history;
    int last_compute_cube = 0;
    int last_src1_cube = 0;
    uint64_t insert_seq = 0;

    double migrations_per_access() const {
        return access_count ? double(migration_count) / double(access_count) : 0.0;
    }
};

// Fully associative per-MC store of page records. Victims are chosen by
// least-frequently-used access count (ties by oldest entry) and abandoned,
// never written back.
class PageInfoCache {
  public:
    explicit PageInfoCache(uint32_t capacity, uint32_t history_len)
        : capacity_(capacity), history_len_(history_len) {}

    PageInfoEntry& touch(PageKey page);               // find-or-allocate
    PageInfoEntry* find(PageKey page);
    // Halve every counter so "highly accessed" tracks the recent window;
    // candidates must be actively accessed pages, not all-time leaders.
    void age_counters();
    const PageInfoEntry* find(PageKey page) const;
    const PageInfoEntry* hottest() const;             // max access_count, ties by lowest key
    size_t occupancy() const { return entries_.size(); }
    uint32_t capacity() const { return capacity_; }
    void clear();

    uint64_t accesses = 0;       // energy tally: every lookup/update
    uint64_t total_page_accesses = 0;  // denominator for page access rate

  private:
    uint32_t capacity_;
    uint32_t history_len_;
    uint64_t next_seq_ = 0;
    std::vector<PageInfoEntry> entries_;
};

// Exponentially decayed per-cube and per-MC load counters (the "system
// information" half of the agent state).
struct SystemCounters {
    static constexpr double kDecay = 0.125;
    std::vector<double> nmp_occupancy_avg;  // per cube, normalized to [0,1]
    std::vector<double> row_hit_avg;        // per cube, [0,1]
    std::vector<double> mc_queue_avg;       // per MC, normalized to [0,1]

    SystemCounters(int cubes, int mcs)
        : nmp_occupancy_avg(size_t(cubes), 0.0), row_hit_avg(size_t(cubes), 0.0),
          mc_queue_avg(size_t(mcs), 0.0) {}

    static void decay_into(double& avg, double value) { avg += kDecay * (value - avg); }
};

// vpage -> suggested compute cube, bounded, FIFO eviction when full.
class ComputeRemapTable {
  public:
    explicit ComputeRemapTable(uint32_t capacity) : capacity_(capacity) {}
    void put(PageKey page, int cube);
    std::optional<int> lookup(PageKey page) const;
    void clear();
    size_t size() const { return map_.size(); }

  private:
    uint32_t capacity_;
    std::map<PageKey, int> map_;
    std::deque<PageKey> fifo_;
};

// Per-core host cache for PEI (set-associative, LRU) plus its MSHR budget.
class HostCache {
  public:
    HostCache(uint64_t bytes, int line_bytes, int ways, int mshr_entries);

    bool probe(uint64_t paddr);    // hit updates LRU; never fills
    void install(uint64_t paddr);  // LRU eviction within the set
    bool mshr_acquire();           // false when all entries are busy
    void mshr_release();
    int mshr_free() const { return mshr_entries_ - mshr_used_; }
    void clear();

  private:
    int line_bytes_;
    int ways_;
    size_t sets_;
    int mshr_entries_;
    int mshr_used_ = 0;
    std::vector<std::vector<std::pair<uint64_t, uint64_t>>> sets_tags_;  // (tag, lru_stamp)
    uint64_t lru_clock_ = 0;
};

// ---------------------------------------------------------------------------
// NMP-op scheduling

struct OperandPlacement {
    PageKey page;
    int cube = 0;       // residence cube at schedule time
    uint64_t paddr = 0;
};

struct SchedulePlan {
    int compute_cube = 0;
    bool remapped = false;                 // compute remap table hit
    std::vector<int> fetch_slots;          // operand slots (1=src1, 2=src2) needing DATA_REQ
    bool forward_result = false;           // result packet to dest cube needed
};

// Decide the compute cube and the operand packet plan for one op. `dest`,
// `src1`, `src2` carry the resolved residences; the remap table is consulted
// dest page first, then src1, then src2.
SchedulePlan schedule_op(Technique technique, const ComputeRemapTable& remap, const OperandPlacement& dest,
                         const OperandPlacement& src1, const std::optional<OperandPlacement>& src2);

// ---------------------------------------------------------------------------
// TOM epoch remapper

struct WindowOp {
    uint64_t dest_frame = 0;
    uint64_t src1_frame = 0;
    std::optional<uint64_t> src2_frame;
};

// Score = total operand movement (bytes x Manhattan hops) with the compute
// cube at the dest page's cube under each candidate; least movement wins,
// ties by lowest candidate index. Empty window keeps `current`.
int tom_epoch_select(const std::vector<WindowOp>& window, memnet::DramMapper& mapper,
                     const std::vector<int>& candidate_variants, int current,
                     const memnet::MeshConfig& mesh, int operand_bytes = 64);

// ---------------------------------------------------------------------------
// PEI host-side filter

struct PeiDecision {
    bool host_execute = false;
    std::vector<int> miss_slots;  // operand slots (0=dest,1=src1,2=src2) to fetch on the host path
};

// Probe all operand lines in the issuing core's cache; one hit routes the op
// to the host with misses fetched through the MC, all-miss offloads.
PeiDecision pei_host_filter(HostCache& cache, const std::vector<uint64_t>& operand_paddrs);

// MCs sit at the four corner cubes; each serves its nearest quadrant.
std::vector<int> mc_corner_cubes(const memnet::MeshConfig& mesh);
int mc_of_cube(int cube, const memnet::MeshConfig& mesh);

// Round-robin candidate page selection across MC caches; empty MCs are
// skipped; the cursor resumes after the providing MC.
struct CandidateSelection {
    int mc = -1;
    PageKey page;
};
std::optional<CandidateSelection> select_candidate_page(std::vector<PageInfoCache>& caches, int& cursor);

}  // namespace nmpsim::offload
