#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nmpsim/config.hpp"
#include "nmpsim/metrics.hpp"
#include "nmpsim/sim.hpp"
#include "nmpsim/trace.hpp"

namespace fs = std::filesystem;
using namespace nmpsim;

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
}

int cmd_simulate(const std::string& config_path, uint64_t seed, const std::string& out_dir,
                 const std::string& baseline, bool events) {
    harness::SimConfig cfg = harness::load_config_file(config_path);
    std::vector<memnet::NetEvent> evlog;
    harness::MetricsReport report = harness::run_simulation(
        cfg, seed ? std::optional<uint64_t>(seed) : std::nullopt, events, events ? &evlog : nullptr);

    std::optional<double> speedup;
    if (!baseline.empty()) {
        std::ifstream in(baseline);
        if (!in) throw IoError("cannot open baseline report: " + baseline);
        std::ostringstream ss;
        ss << in.rdbuf();
        auto cycles = harness::baseline_cycles_from_report(ss.str());
        if (!cycles) throw IoError("baseline report has no cycles row: " + baseline);
        speedup = report.total_cycles ? double(*cycles) / double(report.total_cycles) : 0.0;
    }

    std::string summary = report.summary_text(speedup);
    std::cout << summary;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        fs::path dir(out_dir);
        write_file(dir / "summary.txt", summary);
        write_file(dir / "report.csv", report.report_csv());
        write_file(dir / "opc_timeline.csv", report.timeline_csv());
        write_file(dir / "intervals.csv", report.intervals_csv());
        write_file(dir / "repeats.csv", report.repeats_csv());
        if (events) {
            write_file(dir / "migrations.csv", report.migrations_csv());
            std::ostringstream ev;
            ev << "cycle,event,packet_id,cube\n";
            for (const auto& e : evlog)
                ev << e.cycle << "," << (e.kind == 'I' ? "inject" : "deliver") << "," << e.packet_id << ","
                   << e.cube << "\n";
            write_file(dir / "events.csv", ev.str());
        }
        if (!report.training_log.empty()) write_file(dir / "training.csv", report.training_csv());
    }
    return 0;
}

int cmd_gen_trace(const std::string& kind, uint64_t n, uint64_t seed, const std::string& out) {
    auto k = trace::kernel_kind_from_name(kind);
    if (!k) throw InvalidParameter("unknown kernel kind: " + kind);
    trace::OpTrace t = trace::generate_kernel_trace(*k, n, seed);
    if (out.empty() || out == "-") {
        std::cout << trace::serialize_trace(t);
    } else {
        trace::save_trace_file(t, out);
        std::cout << "wrote " << t.ops.size() << " ops to " << out << "\n";
    }
    return 0;
}

std::vector<uint64_t> parse_edges(const std::string& edges) {
    std::vector<uint64_t> out;
    std::stringstream ss(edges);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoull(tok));
    return out;
}

int cmd_analyze(const std::string& trace_path, const std::string& mode, const std::string& edges,
                uint64_t epoch, double issue_rate, uint32_t bins, const std::string& out) {
    trace::OpTrace t = trace::load_trace_file(trace_path);
    std::ostringstream csv;
    if (mode == "classify") {
        auto edge_vec = parse_edges(edges);
        auto hist = trace::classify_page_accesses(t, edge_vec);
        csv << "bin_lo,bin_hi,pages\n";
        for (size_t b = 0; b < hist.size(); ++b) {
            uint64_t lo = b == 0 ? 0 : edge_vec[b - 1];
            std::string hi = b < edge_vec.size() ? std::to_string(edge_vec[b]) : "inf";
            csv << lo << "," << hi << "," << hist[b] << "\n";
        }
    } else if (mode == "active") {
        double mean = trace::active_page_distribution(t, epoch, issue_rate);
        csv << "epoch_cycles,issue_rate,mean_active_pages\n";
        csv << epoch << "," << harness::format_double(issue_rate) << "," << harness::format_double(mean)
            << "\n";
    } else if (mode == "affinity") {
        auto prof = trace::affinity_analysis(t, bins);
        csv << "quadrant,pages\n";
        csv << "low_radix_low_weight," << prof.quadrant_counts[0] << "\n";
        csv << "low_radix_high_weight," << prof.quadrant_counts[1] << "\n";
        csv << "high_radix_low_weight," << prof.quadrant_counts[2] << "\n";
        csv << "high_radix_high_weight," << prof.quadrant_counts[3] << "\n";
    } else {
        throw InvalidParameter("unknown analyze mode: " + mode);
    }
    std::cout << csv.str();
    if (!out.empty()) write_file(out, csv.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"near-memory-processing memory-cube network simulator"};
    app.require_subcommand(1);

    auto* sim = app.add_subcommand("simulate", "run a simulation from a config file");
    std::string config_path, out_dir, baseline;
    uint64_t seed = 0;
    bool events = false;
    sim->add_option("--config", config_path, "config file (section.key = value)")->required();
    sim->add_option("--seed", seed, "override sim.seed");
    sim->add_option("--out", out_dir, "directory for report CSVs");
    sim->add_option("--baseline", baseline, "report.csv of a baseline run for speedup");
    sim->add_flag("--events", events, "write per-cycle network event and migration logs");

    auto* gen = app.add_subcommand("gen-trace", "generate a synthetic kernel trace");
    std::string kind = "MAC", gen_out;
    uint64_t n = 1024, gen_seed = 1;
    gen->add_option("--kind", kind, "MAC|RD|SPMV_LIKE|PR_LIKE|BP_LIKE|KM_LIKE")->required();
    gen->add_option("--n", n, "element count")->required();
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output file (default stdout)");

    auto* ana = app.add_subcommand("analyze", "workload analysis over a trace");
    std::string trace_path, mode = "classify", edges = "2,64,4096", ana_out;
    uint64_t epoch = 1000;
    double issue_rate = 1.0;
    uint32_t bins = 8;
    ana->add_option("--trace", trace_path, "trace file")->required();
    ana->add_option("--mode", mode, "classify|active|affinity")->required();
    ana->add_option("--edges", edges, "classify bin edges, comma separated");
    ana->add_option("--epoch", epoch, "active-page epoch length in cycles");
    ana->add_option("--issue-rate", issue_rate, "nominal ops per cycle");
    ana->add_option("--bins", bins, "affinity bins per axis");
    ana->add_option("--out", ana_out, "also write CSV here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(config_path, seed, out_dir, baseline, events);
        if (gen->parsed()) return cmd_gen_trace(kind, n, gen_seed, gen_out);
        if (ana->parsed()) return cmd_analyze(trace_path, mode, edges, epoch, issue_rate, bins, ana_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
