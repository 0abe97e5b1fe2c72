#include "nmpsim/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace nmpsim::harness {

const char* remapper_name(Remapper r) {
    switch (r) {
        case Remapper::NONE: return "none";
        case Remapper::TOM: return "TOM";
        case Remapper::AIMM: return "AIMM";
    }
    return "?";
}

std::optional<Remapper> remapper_from_name(const std::string& s) {
    if (s == "none" || s == "NONE") return Remapper::NONE;
    if (s == "TOM" || s == "tom") return Remapper::TOM;
    if (s == "AIMM" || s == "aimm") return Remapper::AIMM;
    return std::nullopt;
}

void SimConfig::validate() const {
    if (mesh.width < 2 || mesh.height < 2) throw ConfigError("mesh must be at least 2x2");
    if (!is_pow2(uint64_t(mesh.cubes()))) throw ConfigError("cube count must be a power of two");
    if (mesh.link_bits < 1 || mesh.router_stages < 1) throw ConfigError("bad link/router parameters");
    if (mesh.vc_count != 5)
        throw ConfigError("vc_count must be 5: one virtual channel per protocol class");
    if (mesh.buffer_flits * mesh.link_bits < 640)
        throw ConfigError("router buffers too small for a data response packet (640 bits)");
    if (cube.nmp_table_entries < 1) throw ConfigError("nmp_table_entries must be positive");
    if (cube.compute_width < 1) throw ConfigError("compute_width must be positive");
    if (!is_pow2(paging.page_size)) throw ConfigError("page_size must be a power of two");
    if (cube.capacity_bytes % paging.page_size != 0) throw ConfigError("cube capacity must be page aligned");
    if (offload.history_len < 1) throw ConfigError("history_len must be positive");
    if (offload.page_info_entries < 1) throw ConfigError("page_info_entries must be positive");
    if (offload.mc_queue < 1) throw ConfigError("mc_queue must be positive");
    if (sim.cores < 1 || sim.mshr < 1) throw ConfigError("cores/mshr must be positive");
    if (sim.issue_width < 1) throw ConfigError("issue_width must be positive");
    if (sim.repeats < 0) throw ConfigError("repeats must be non-negative");
    if (traces.empty()) throw ConfigError("at least one trace is required");
    if (agent_async_train) throw ConfigError("agent.async_train is reserved; only the synchronous mode exists");
    agent.validate();
    for (const auto& t : traces) {
        bool has_file = !t.file.empty();
        bool has_gen = t.generate.has_value();
        if (has_file == has_gen) throw ConfigError("trace spec needs exactly one of file or generator");
        if (has_gen && t.n == 0) throw ConfigError("generated trace needs n > 0");
    }
}

int SimConfig::effective_repeats(size_t process_count) const {
    if (sim.repeats > 0) return sim.repeats;
    return process_count > 1 ? 10 : 5;
}

namespace {

struct Kv {
    std::string key;
    std::string value;
    size_t line_no;
};

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

uint64_t to_u64(const Kv& kv) {
    uint64_t v = 0;
    auto s = kv.value;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ConfigError("bad integer for " + kv.key + ": '" + s + "'");
    return v;
}

int to_int(const Kv& kv) { return int(to_u64(kv)); }

double to_double(const Kv& kv) {
    try {
        size_t pos = 0;
        double v = std::stod(kv.value, &pos);
        if (pos != kv.value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("bad number for " + kv.key + ": '" + kv.value + "'");
    }
}

bool to_bool(const Kv& kv) {
    if (kv.value == "true" || kv.value == "1") return true;
    if (kv.value == "false" || kv.value == "0") return false;
    throw ConfigError("bad boolean for " + kv.key + ": '" + kv.value + "'");
}

// `KIND:n=...[:seed=...]`
TraceSpec parse_generate(const Kv& kv) {
    TraceSpec spec;
    std::string s = kv.value;
    std::vector<std::string> parts;
    size_t start = 0;
    while (true) {
        size_t c = s.find(':', start);
        parts.push_back(s.substr(start, c - start));
        if (c == std::string::npos) break;
        start = c + 1;
    }
    auto kind = trace::kernel_kind_from_name(parts[0]);
    if (!kind) throw ConfigError("unknown kernel kind '" + parts[0] + "'");
    spec.generate = *kind;
    for (size_t i = 1; i < parts.size(); ++i) {
        auto eq = parts[i].find('=');
        if (eq == std::string::npos) throw ConfigError("bad generator parameter '" + parts[i] + "'");
        std::string k = parts[i].substr(0, eq);
        Kv sub{kv.key, parts[i].substr(eq + 1), kv.line_no};
        if (k == "n") spec.n = to_u64(sub);
        else if (k == "seed") spec.seed = to_u64(sub);
        else throw ConfigError("unknown generator parameter '" + k + "'");
    }
    return spec;
}

}  // namespace

SimConfig parse_config(const std::string& text) {
    SimConfig cfg;
    std::istringstream is(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        Kv kv{trim(t.substr(0, eq)), trim(t.substr(eq + 1)), line_no};
        const std::string& k = kv.key;

        if (k == "mesh.width") cfg.mesh.width = to_int(kv);
        else if (k == "mesh.height") cfg.mesh.height = to_int(kv);
        else if (k == "mesh.link_bits") cfg.mesh.link_bits = to_int(kv);
        else if (k == "mesh.router_stages") cfg.mesh.router_stages = to_int(kv);
        else if (k == "mesh.vc_count") cfg.mesh.vc_count = to_int(kv);
        else if (k == "mesh.buffer_flits") cfg.mesh.buffer_flits = to_int(kv);
        else if (k == "cube.capacity_bytes") cfg.cube.capacity_bytes = to_u64(kv);
        else if (k == "cube.vaults") cfg.cube.geometry.vaults = to_int(kv);
        else if (k == "cube.banks") cfg.cube.geometry.banks_per_vault = to_int(kv);
        else if (k == "cube.row_hit_cycles") cfg.cube.timing.row_hit_cycles = to_int(kv);
        else if (k == "cube.row_miss_cycles") cfg.cube.timing.row_miss_cycles = to_int(kv);
        else if (k == "cube.nmp_table_entries") cfg.cube.nmp_table_entries = to_int(kv);
        else if (k == "cube.compute_width") cfg.cube.compute_width = to_int(kv);
        else if (k == "paging.page_size") cfg.paging.page_size = to_u64(kv);
        else if (k == "paging.policy") {
            if (kv.value == "default") cfg.paging.policy = paging::AllocPolicy::DEFAULT;
            else if (kv.value == "hoard") cfg.paging.policy = paging::AllocPolicy::HOARD;
            else if (kv.value == "hotspot") cfg.paging.policy = paging::AllocPolicy::HOTSPOT;
            else throw ConfigError("unknown paging policy '" + kv.value + "'");
        } else if (k == "paging.migration_queue") cfg.paging.migration_queue = uint32_t(to_u64(kv));
        else if (k == "paging.dma_channels") cfg.paging.dma_channels = to_int(kv);
        else if (k == "paging.os_interrupt_cycles") cfg.paging.os_interrupt_cycles = to_int(kv);
        else if (k == "paging.hoard_chunk_frames") cfg.paging.hoard_chunk_frames = to_u64(kv);
        else if (k == "offload.technique") {
            auto t2 = offload::technique_from_name(kv.value);
            if (!t2) throw ConfigError("unknown technique '" + kv.value + "'");
            cfg.offload.technique = *t2;
        } else if (k == "offload.remapper") {
            auto r = remapper_from_name(kv.value);
            if (!r) throw ConfigError("unknown remapper '" + kv.value + "'");
            cfg.offload.remapper = *r;
        } else if (k == "offload.page_info_entries") cfg.offload.page_info_entries = uint32_t(to_u64(kv));
        else if (k == "offload.history_len") cfg.offload.history_len = uint32_t(to_u64(kv));
        else if (k == "offload.mc_queue") cfg.offload.mc_queue = uint32_t(to_u64(kv));
        else if (k == "offload.remap_entries") cfg.offload.remap_entries = uint32_t(to_u64(kv));
        else if (k == "offload.tom_epoch_cycles") cfg.offload.tom_epoch_cycles = to_u64(kv);
        else if (k == "offload.report_period") cfg.offload.report_period = to_int(kv);
        else if (k == "offload.access_aging_cycles") cfg.offload.access_aging_cycles = to_u64(kv);
        else if (k == "agent.gamma") cfg.agent.gamma = to_double(kv);
        else if (k == "agent.lr") cfg.agent.lr = to_double(kv);
        else if (k == "agent.batch") cfg.agent.batch_size = to_int(kv);
        else if (k == "agent.train_period") cfg.agent.train_period = to_int(kv);
        else if (k == "agent.eps_start") cfg.agent.eps_start = to_double(kv);
        else if (k == "agent.eps_end") cfg.agent.eps_end = to_double(kv);
        else if (k == "agent.eps_decay_ticks") cfg.agent.eps_decay_ticks = to_u64(kv);
        else if (k == "agent.replay_capacity") cfg.agent.replay_capacity = uint32_t(to_u64(kv));
        else if (k == "agent.hidden") cfg.agent.hidden = to_int(kv);
        else if (k == "agent.initial_interval") cfg.agent.initial_interval = to_int(kv);
        else if (k == "agent.reward_tol") cfg.agent.reward_tol = to_double(kv);
        else if (k == "agent.latency_norm") cfg.agent.latency_norm = to_double(kv);
        else if (k == "agent.migration_latency_norm") cfg.agent.migration_latency_norm = to_double(kv);
        else if (k == "agent.use_target_net") cfg.agent.use_target_net = to_bool(kv);
        else if (k == "agent.target_sync_period") cfg.agent.target_sync_period = to_int(kv);
        else if (k == "agent.async_train") cfg.agent_async_train = to_bool(kv);
        else if (k == "agent.checkpoint_in") cfg.checkpoint_in = kv.value;
        else if (k == "agent.checkpoint_out") cfg.checkpoint_out = kv.value;
        else if (k == "sim.cores") cfg.sim.cores = to_int(kv);
        else if (k == "sim.mshr") cfg.sim.mshr = to_int(kv);
        else if (k == "sim.cache_bytes") cfg.sim.cache_bytes = to_u64(kv);
        else if (k == "sim.cache_line") cfg.sim.cache_line = to_int(kv);
        else if (k == "sim.cache_ways") cfg.sim.cache_ways = to_int(kv);
        else if (k == "sim.issue_width") cfg.sim.issue_width = to_int(kv);
        else if (k == "sim.repeats") cfg.sim.repeats = to_int(kv);
        else if (k == "sim.seed") cfg.sim.seed = to_u64(kv);
        else if (k == "sim.max_cycles") cfg.sim.max_cycles = to_u64(kv);
        else if (k == "sim.allow_many_processes") cfg.sim.allow_many_processes = to_bool(kv);
        else if (k == "trace.file") {
            TraceSpec spec;
            spec.file = kv.value;
            cfg.traces.push_back(spec);
        } else if (k == "trace.generate") cfg.traces.push_back(parse_generate(kv));
        else throw ConfigError("unknown config key '" + k + "' (line " + std::to_string(line_no) + ")");
    }
    cfg.validate();
    return cfg;
}

SimConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace nmpsim::harness
