#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nmpsim/common.hpp"

namespace nmpsim::harness {

// Per-access / per-bit energies, integer femtojoules so sums are exact.
inline constexpr uint64_t kNetworkFjPerBitHop = 5'000;       //  5 pJ/bit/hop
inline constexpr uint64_t kMemoryFjPerBit = 12'000;          // 12 pJ/bit/access
inline constexpr uint64_t kPageInfoFjPerAccess = 50'000;     // 0.05 nJ
inline constexpr uint64_t kNmpBufferFjPerAccess = 122'000;   // 0.122 nJ
inline constexpr uint64_t kMigQueueFjPerAccess = 26'890;     // 0.02689 nJ
inline constexpr uint64_t kMdmaFjPerAccess = 106'200;        // 0.1062 nJ
inline constexpr uint64_t kWeightFjPerAccess = 244'000;      // 0.244 nJ
inline constexpr uint64_t kReplayFjPerAccess = 2'300'000;    // 2.3 nJ
inline constexpr uint64_t kStateBufFjPerAccess = 106'000;    // 0.106 nJ

struct EnergyTallies {
    uint64_t network_bit_hops = 0;
    uint64_t memory_bits = 0;
    uint64_t page_info_accesses = 0;
    uint64_t nmp_table_accesses = 0;
    uint64_t migration_queue_accesses = 0;
    uint64_t mdma_accesses = 0;
    uint64_t weight_accesses = 0;
    uint64_t replay_accesses = 0;
    uint64_t state_buffer_accesses = 0;
};

struct EnergyBreakdown {
    uint64_t network_fj = 0;
    uint64_t memory_fj = 0;
    uint64_t page_info_fj = 0;
    uint64_t nmp_buffer_fj = 0;
    uint64_t migration_queue_fj = 0;
    uint64_t mdma_fj = 0;
    uint64_t weight_fj = 0;
    uint64_t replay_fj = 0;
    uint64_t state_buffer_fj = 0;
    uint64_t total_fj = 0;

    static double nj(uint64_t fj) { return double(fj) / 1e6; }
};

EnergyBreakdown compute_energy(const EnergyTallies& t);

// Balance score: sum(c) / (N * max(c)); 1 when perfectly balanced. Absent
// (nullopt) when every count is zero.
std::optional<double> compute_utilization(const std::vector<uint64_t>& per_cube_completions);

struct IntervalRow {
    uint64_t index = 0;
    uint64_t start_cycle = 0;
    uint64_t length = 0;
    uint64_t ops = 0;
    double opc = 0.0;
    double avg_hops = 0.0;
    std::vector<uint64_t> per_cube_completions;
    double row_hit_rate = 0.0;
};

struct RepeatSummary {
    int repeat = 0;
    uint64_t cycles = 0;
    uint64_t ops = 0;
    double opc = 0.0;
    double avg_hop = 0.0;
    uint64_t migrations_completed = 0;
    uint64_t migrations_aborted = 0;
};

struct MigrationRow {
    uint64_t vpage;
    uint32_t pid;
    int src_cube;
    int dst_cube;
    bool blocking;
    uint64_t start;
    uint64_t end;
    bool aborted;
};

struct TrainingRow {
    uint64_t tick;
    double epsilon;
    std::optional<double> loss;
    int reward;
    int action;
    int interval;
};

struct MetricsReport {
    std::string technique;
    std::string remapper;
    std::string policy;

    // final repeat
    uint64_t total_cycles = 0;
    uint64_t ops_completed = 0;
    uint64_t opc_ops = 0;  // completion count used for OPC (includes migration accesses for PEI+AIMM)
    double opc = 0.0;
    double avg_hop_count = 0.0;
    std::vector<uint64_t> per_cube_completions;
    std::optional<double> utilization;
    std::vector<double> row_hit_rates;
    double row_hit_rate_overall = 0.0;

    uint64_t pages_touched = 0;
    uint64_t pages_migrated = 0;
    uint64_t page_accesses_total = 0;
    uint64_t page_accesses_to_migrated = 0;
    uint64_t migrations_completed = 0;
    uint64_t migrations_aborted = 0;
    uint64_t migration_drops_full = 0;
    uint64_t migration_drops_inflight = 0;
    uint64_t migration_drops_noop = 0;

    EnergyTallies tallies;
    EnergyBreakdown energy;

    std::vector<IntervalRow> timeline;
    std::vector<RepeatSummary> repeats;
    std::vector<MigrationRow> migration_log;
    std::vector<TrainingRow> training_log;

    std::string summary_text(std::optional<double> speedup_vs_baseline = std::nullopt) const;
    std::string report_csv() const;    // key,value rows
    std::string timeline_csv() const;  // opc timeline
    std::string intervals_csv() const; // per-interval stats (offload interface)
    std::string repeats_csv() const;
    std::string migrations_csv() const;
    std::string training_csv() const;
    // every serialization concatenated; the determinism contract compares this
    std::string serialize_all() const;
};

// Reads `key,value` rows produced by report_csv (for --baseline speedup).
std::optional<uint64_t> baseline_cycles_from_report(const std::string& csv_text);

std::string format_double(double v);  // deterministic %.9g

}  // namespace nmpsim::harness
