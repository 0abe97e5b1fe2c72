#include "nmpsim/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace nmpsim::harness {

EnergyBreakdown compute_energy(const EnergyTallies& t) {
    EnergyBreakdown e;
    e.network_fj = t.network_bit_hops * kNetworkFjPerBitHop;
    e.memory_fj = t.memory_bits * kMemoryFjPerBit;
    e.page_info_fj = t.page_info_accesses * kPageInfoFjPerAccess;
    e.nmp_buffer_fj = t.nmp_table_accesses * kNmpBufferFjPerAccess;
    e.migration_queue_fj = t.migration_queue_accesses * kMigQueueFjPerAccess;
    e.mdma_fj = t.mdma_accesses * kMdmaFjPerAccess;
    e.weight_fj = t.weight_accesses * kWeightFjPerAccess;
    e.replay_fj = t.replay_accesses * kReplayFjPerAccess;
    e.state_buffer_fj = t.state_buffer_accesses * kStateBufFjPerAccess;
    e.total_fj = e.network_fj + e.memory_fj + e.page_info_fj + e.nmp_buffer_fj + e.migration_queue_fj +
                 e.mdma_fj + e.weight_fj + e.replay_fj + e.state_buffer_fj;
    return e;
}

std::optional<double> compute_utilization(const std::vector<uint64_t>& per_cube_completions) {
    if (per_cube_completions.empty()) return std::nullopt;
    uint64_t sum = 0, mx = 0;
    for (uint64_t c : per_cube_completions) {
        sum += c;
        mx = std::max(mx, c);
    }
    if (mx == 0) return std::nullopt;
    return double(sum) / (double(per_cube_completions.size()) * double(mx));
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

namespace {
std::string join_counts(const std::vector<uint64_t>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ';';
        out += std::to_string(v[i]);
    }
    return out;
}
}  // namespace

std::string MetricsReport::summary_text(std::optional<double> speedup) const {
    std::ostringstream os;
    os << "nmpsim simulation report\n";
    os << "technique=" << technique << " remapper=" << remapper << " policy=" << policy << "\n";
    os << "cycles=" << total_cycles << "\n";
    os << "ops_completed=" << ops_completed << "\n";
    os << "opc=" << format_double(opc) << "\n";
    os << "avg_hop_count=" << format_double(avg_hop_count) << "\n";
    os << "computation_utilization=" << (utilization ? format_double(*utilization) : "absent") << "\n";
    os << "row_hit_rate=" << format_double(row_hit_rate_overall) << "\n";
    os << "pages_touched=" << pages_touched << " pages_migrated=" << pages_migrated << " migrated_fraction="
       << format_double(pages_touched ? double(pages_migrated) / double(pages_touched) : 0.0) << "\n";
    os << "page_accesses=" << page_accesses_total << " to_migrated=" << page_accesses_to_migrated
       << " migrated_access_fraction="
       << format_double(page_accesses_total ? double(page_accesses_to_migrated) / double(page_accesses_total)
                                            : 0.0)
       << "\n";
    os << "migrations completed=" << migrations_completed << " aborted=" << migrations_aborted
       << " drops_full=" << migration_drops_full << " drops_inflight=" << migration_drops_inflight
       << " drops_noop=" << migration_drops_noop << "\n";
    os << "energy_nj total=" << format_double(EnergyBreakdown::nj(energy.total_fj))
       << " network=" << format_double(EnergyBreakdown::nj(energy.network_fj))
       << " memory=" << format_double(EnergyBreakdown::nj(energy.memory_fj))
       << " page_info=" << format_double(EnergyBreakdown::nj(energy.page_info_fj))
       << " nmp_buffer=" << format_double(EnergyBreakdown::nj(energy.nmp_buffer_fj))
       << " migration_queue=" << format_double(EnergyBreakdown::nj(energy.migration_queue_fj))
       << " mdma=" << format_double(EnergyBreakdown::nj(energy.mdma_fj))
       << " weights=" << format_double(EnergyBreakdown::nj(energy.weight_fj))
       << " replay=" << format_double(EnergyBreakdown::nj(energy.replay_fj))
       << " state=" << format_double(EnergyBreakdown::nj(energy.state_buffer_fj)) << "\n";
    os << "per_cube_completions=" << join_counts(per_cube_completions) << "\n";
    for (const auto& r : repeats) {
        os << "repeat " << r.repeat << ": opc=" << format_double(r.opc)
           << " avg_hop=" << format_double(r.avg_hop) << " cycles=" << r.cycles << " ops=" << r.ops
           << " migrations=" << r.migrations_completed << "\n";
    }
    if (speedup) os << "speedup_vs_baseline=" << format_double(*speedup) << "x\n";
    return os.str();
}

std::string MetricsReport::report_csv() const {
    std::ostringstream os;
    os << "key,value\n";
    os << "technique," << technique << "\n";
    os << "remapper," << remapper << "\n";
    os << "policy," << policy << "\n";
    os << "cycles," << total_cycles << "\n";
    os << "ops_completed," << ops_completed << "\n";
    os << "opc_ops," << opc_ops << "\n";
    os << "opc," << format_double(opc) << "\n";
    os << "avg_hop_count," << format_double(avg_hop_count) << "\n";
    os << "computation_utilization," << (utilization ? format_double(*utilization) : "absent") << "\n";
    os << "row_hit_rate," << format_double(row_hit_rate_overall) << "\n";
    os << "pages_touched," << pages_touched << "\n";
    os << "pages_migrated," << pages_migrated << "\n";
    os << "page_accesses," << page_accesses_total << "\n";
    os << "page_accesses_to_migrated," << page_accesses_to_migrated << "\n";
    os << "migrations_completed," << migrations_completed << "\n";
    os << "migrations_aborted," << migrations_aborted << "\n";
    os << "migration_drops_full," << migration_drops_full << "\n";
    os << "migration_drops_inflight," << migration_drops_inflight << "\n";
    os << "migration_drops_noop," << migration_drops_noop << "\n";
    os << "network_bit_hops," << tallies.network_bit_hops << "\n";
    os << "memory_bits," << tallies.memory_bits << "\n";
    os << "energy_total_fj," << energy.total_fj << "\n";
    os << "energy_network_fj," << energy.network_fj << "\n";
    os << "energy_memory_fj," << energy.memory_fj << "\n";
    os << "energy_page_info_fj," << energy.page_info_fj << "\n";
    os << "energy_nmp_buffer_fj," << energy.nmp_buffer_fj << "\n";
    os << "energy_migration_queue_fj," << energy.migration_queue_fj << "\n";
    os << "energy_mdma_fj," << energy.mdma_fj << "\n";
    os << "energy_weight_fj," << energy.weight_fj << "\n";
    os << "energy_replay_fj," << energy.replay_fj << "\n";
    os << "energy_state_buffer_fj," << energy.state_buffer_fj << "\n";
    return os.str();
}

std::string MetricsReport::timeline_csv() const {
    std::ostringstream os;
    os << "interval,start_cycle,length,ops,opc\n";
    for (const auto& r : timeline)
        os << r.index << "," << r.start_cycle << "," << r.length << "," << r.ops << ","
           << format_double(r.opc) << "\n";
    return os.str();
}

std::string MetricsReport::intervals_csv() const {
    std::ostringstream os;
    os << "interval,opc,avg_hops,per_cube_completions,row_hit_rate\n";
    for (const auto& r : timeline)
        os << r.index << "," << format_double(r.opc) << "," << format_double(r.avg_hops) << ","
           << join_counts(r.per_cube_completions) << "," << format_double(r.row_hit_rate) << "\n";
    return os.str();
}

std::string MetricsReport::repeats_csv() const {
    std::ostringstream os;
    os << "repeat,cycles,ops,opc,avg_hop,migrations_completed,migrations_aborted\n";
    for (const auto& r : repeats)
        os << r.repeat << "," << r.cycles << "," << r.ops << "," << format_double(r.opc) << ","
           << format_double(r.avg_hop) << "," << r.migrations_completed << "," << r.migrations_aborted
           << "\n";
    return os.str();
}

std::string MetricsReport::migrations_csv() const {
    std::ostringstream os;
    os << "vpage,pid,src_cube,dst_cube,mode,start,end,aborted\n";
    for (const auto& m : migration_log)
        os << m.vpage << "," << m.pid << "," << m.src_cube << "," << m.dst_cube << ","
           << (m.blocking ? "blocking" : "non_blocking") << "," << m.start << "," << m.end << ","
           << (m.aborted ? 1 : 0) << "\n";
    return os.str();
}

std::string MetricsReport::training_csv() const {
    std::ostringstream os;
    os << "tick,epsilon,loss,reward,action,interval\n";
    for (const auto& t : training_log)
        os << t.tick << "," << format_double(t.epsilon) << "," << (t.loss ? format_double(*t.loss) : "")
           << "," << t.reward << "," << t.action << "," << t.interval << "\n";
    return os.str();
}

std::string MetricsReport::serialize_all() const {
    std::string out = summary_text();
    out += "\n--report--\n";
    out += report_csv();
    out += "\n--timeline--\n";
    out += timeline_csv();
    out += "\n--intervals--\n";
    out += intervals_csv();
    out += "\n--repeats--\n";
    out += repeats_csv();
    out += "\n--migrations--\n";
    out += migrations_csv();
    out += "\n--training--\n";
    out += training_csv();
    return out;
}

std::optional<uint64_t> baseline_cycles_from_report(const std::string& csv_text) {
    std::istringstream is(csv_text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind("cycles,", 0) == 0) {
            try {
                return std::stoull(line.substr(7));
            } catch (...) {
                return std::nullopt;
            }
        }
    }
    return std::nullopt;
}

}  // namespace nmpsim::harness
