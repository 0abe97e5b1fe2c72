#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nmpsim/agent.hpp"
#include "nmpsim/config.hpp"
#include "nmpsim/metrics.hpp"
#include "nmpsim/sim.hpp"
#include "nmpsim/trace.hpp"

namespace py = pybind11;
using namespace nmpsim;

namespace {

trace::OpTrace gen_trace(const std::string& kind, uint64_t n, uint64_t seed) {
    auto k = trace::kernel_kind_from_name(kind);
    if (!k) throw InvalidParameter("unknown kernel kind: " + kind);
    return trace::generate_kernel_trace(*k, n, seed);
}

py::dict report_to_dict(const harness::MetricsReport& r) {
    py::dict d;
    d["technique"] = r.technique;
    d["remapper"] = r.remapper;
    d["policy"] = r.policy;
    d["cycles"] = r.total_cycles;
    d["ops_completed"] = r.ops_completed;
    d["opc"] = r.opc;
    d["avg_hop_count"] = r.avg_hop_count;
    d["per_cube_completions"] = r.per_cube_completions;
    if (r.utilization) d["computation_utilization"] = *r.utilization;
    else d["computation_utilization"] = py::none();
    d["row_hit_rate"] = r.row_hit_rate_overall;
    d["pages_touched"] = r.pages_touched;
    d["pages_migrated"] = r.pages_migrated;
    d["migrations_completed"] = r.migrations_completed;
    d["migrations_aborted"] = r.migrations_aborted;
    d["energy_total_nj"] = harness::EnergyBreakdown::nj(r.energy.total_fj);
    d["energy_network_nj"] = harness::EnergyBreakdown::nj(r.energy.network_fj);
    d["energy_memory_nj"] = harness::EnergyBreakdown::nj(r.energy.memory_fj);
    py::list reps;
    for (const auto& rep : r.repeats) {
        py::dict rd;
        rd["repeat"] = rep.repeat;
        rd["cycles"] = rep.cycles;
        rd["ops"] = rep.ops;
        rd["opc"] = rep.opc;
        rd["avg_hop"] = rep.avg_hop;
        rd["migrations_completed"] = rep.migrations_completed;
        reps.append(rd);
    }
    d["repeats"] = reps;
    d["summary"] = r.summary_text();
    d["report_csv"] = r.report_csv();
    return d;
}

}  // namespace

PYBIND11_MODULE(_nmpsim, m) {
    m.doc() = "trace-driven near-memory-processing mesh simulator";

    py::register_exception<SimError>(m, "SimError");

    py::class_<trace::OpTrace>(m, "OpTrace")
        .def(py::init([](const std::string& text) { return trace::parse_trace(text); }), py::arg("text"))
        .def_property_readonly("page_size", [](const trace::OpTrace& t) { return t.page_size_bytes; })
        .def("__len__", [](const trace::OpTrace& t) { return t.ops.size(); })
        .def("serialize", [](const trace::OpTrace& t) { return trace::serialize_trace(t); });

    m.def("generate_kernel_trace", &gen_trace, py::arg("kind"), py::arg("n"), py::arg("seed") = 1,
          "synthesize a kernel trace (MAC, RD, SPMV_LIKE, PR_LIKE, BP_LIKE, KM_LIKE)");
    m.def("parse_trace", &trace::parse_trace, py::arg("text"));
    m.def("serialize_trace", &trace::serialize_trace, py::arg("trace"));
    m.def(
        "classify_page_accesses",
        [](const trace::OpTrace& t, const std::vector<uint64_t>& edges) {
            return trace::classify_page_accesses(t, edges);
        },
        py::arg("trace"), py::arg("bin_edges"));
    m.def("active_page_distribution", &trace::active_page_distribution, py::arg("trace"),
          py::arg("epoch_cycles"), py::arg("issue_rate"));
    m.def(
        "affinity_quadrants",
        [](const trace::OpTrace& t, uint32_t bins) {
            auto prof = trace::affinity_analysis(t, bins);
            return prof.quadrant_counts;
        },
        py::arg("trace"), py::arg("n_bins") = 8);

    m.def("compute_reward", &agent::compute_reward, py::arg("opc_prev"), py::arg("opc_cur"),
          py::arg("tol") = 1e-3);
    m.def(
        "compute_utilization",
        [](const std::vector<uint64_t>& counts) -> py::object {
            auto u = harness::compute_utilization(counts);
            if (!u) return py::none();
            return py::float_(*u);
        },
        py::arg("per_cube_completions"));

    m.def(
        "run_simulation",
        [](const std::string& config_text, py::object seed) {
            harness::SimConfig cfg = harness::parse_config(config_text);
            std::optional<uint64_t> s;
            if (!seed.is_none()) s = seed.cast<uint64_t>();
            return report_to_dict(harness::run_simulation(cfg, s));
        },
        py::arg("config_text"), py::arg("seed") = py::none(),
        "run a simulation from config text and return the report as a dict");
    m.def(
        "run_simulation_file",
        [](const std::string& path, py::object seed) {
            harness::SimConfig cfg = harness::load_config_file(path);
            std::optional<uint64_t> s;
            if (!seed.is_none()) s = seed.cast<uint64_t>();
            return report_to_dict(harness::run_simulation(cfg, s));
        },
        py::arg("config_path"), py::arg("seed") = py::none());
}
