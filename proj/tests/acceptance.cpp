// Acceptance suite: runs every acceptance criterion end to end and prints one
// PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "nmpsim/agent.hpp"
#include "nmpsim/config.hpp"
#include "nmpsim/memnet.hpp"
#include "nmpsim/metrics.hpp"
#include "nmpsim/offload.hpp"
#include "nmpsim/paging.hpp"
#include "nmpsim/sim.hpp"
#include "nmpsim/trace.hpp"

using namespace nmpsim;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s (%s)\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
    if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// --- 1. routing oracle ------------------------------------------------------
void criterion_routing() {
    auto t0 = Clock::now();
    uint64_t checked = 0;
    bool ok = true;
    for (int width : {4, 8}) {
        memnet::MeshConfig mesh;
        mesh.width = mesh.height = width;
        memnet::Network net(mesh);
        std::mt19937_64 rng{uint64_t(width)};
        uint64_t cycle = 0;
        uint64_t launched = 0, pending = 0, delivered = 0;
        const uint64_t target = 10000;
        while (delivered < target) {
            while (launched < target && pending < 64) {
                memnet::Packet p;
                p.kind = memnet::PacketKind::DATA_REQ;
                p.src_cube = int(draw_below(rng, uint64_t(mesh.cubes())));
                p.dst_cube = int(draw_below(rng, uint64_t(mesh.cubes())));
                p.payload_bits = 128;
                if (!net.try_inject(p, cycle)) break;
                ++pending;
                ++launched;
            }
            for (const auto& d : net.step(cycle)) {
                int dist = memnet::manhattan(memnet::coord_of(d.packet.src_cube, mesh),
                                             memnet::coord_of(d.packet.dst_cube, mesh));
                if (d.packet.hop_count != dist) ok = false;
                --pending;
                ++delivered;
                ++checked;
            }
            ++cycle;
            if (cycle > 10'000'000) {
                ok = false;
                break;
            }
        }
    }
    double secs = seconds_since(t0);
    ok = ok && checked == 20000 && secs < 5.0;
    report(1, "routing oracle: hop count == Manhattan on 4x4 and 8x8", ok,
           std::to_string(checked) + " pairs in " + harness::format_double(secs) + "s");
}

// --- 2. network losslessness ------------------------------------------------
void criterion_losslessness() {
    memnet::MeshConfig mesh;
    memnet::Network net(mesh);
    std::mt19937_64 rng(5150);
    uint64_t cycle = 0, injected = 0;
    const uint64_t target = 50000;
    bool ok = true;
    while (injected < target || net.in_flight() > 0) {
        for (int k = 0; k < 6 && injected < target; ++k) {
            memnet::Packet p;
            p.kind = memnet::PacketKind(draw_below(rng, 6));
            p.src_cube = int(draw_below(rng, 16));
            p.dst_cube = int(draw_below(rng, 16));
            p.payload_bits =
                p.kind == memnet::PacketKind::DATA_RESP || p.kind == memnet::PacketKind::MIGRATION_DATA
                    ? 640
                    : 128;
            if (net.try_inject(p, cycle)) ++injected;
        }
        net.step(cycle);
        ++cycle;
        if (net.injected() != net.delivered() + net.in_flight()) ok = false;
        if (net.audit_resident() != net.in_flight()) ok = false;
        if (cycle > 10'000'000) {
            ok = false;
            break;
        }
    }
    ok = ok && net.delivered() == target;
    report(2, "network losslessness: injected == delivered + in-flight, zero drops", ok,
           std::to_string(net.delivered()) + " delivered over " + std::to_string(cycle) + " cycles");
}

// --- 3. DRAM bijection ------------------------------------------------------
void criterion_bijection() {
    memnet::MeshConfig mesh;
    memnet::CubeGeometry geo;
    memnet::DramMapper map(mesh, geo, 64 * 1024, 4096);  // 64 KiB per cube
    bool ok = true;
    uint64_t checked = 0;
    for (int variant = 0; variant < memnet::DramMapper::kVariants; ++variant) {
        map.set_variant(variant);
        for (uint64_t a = 0; a < map.total_bytes(); ++a) {
            if (map.unmap(map.map(a)) != a) {
                ok = false;
                break;
            }
            ++checked;
        }
    }
    report(3, "dram_map bijection by exhaustive enumeration (all variants)", ok,
           std::to_string(checked) + " addresses");
}

// --- 4. migration coherence property ---------------------------------------
void criterion_migration_coherence() {
    bool ok = true;
    std::mt19937_64 rng(7001);
    uint64_t scenarios = 0;
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        memnet::MeshConfig mesh;
        memnet::DramMapper mapper(mesh, memnet::CubeGeometry{}, 64 * 1024, 4096);
        paging::PagingConfig pcfg;
        pcfg.migration_queue_capacity = 8;
        paging::PagingSystem paging(pcfg, mapper);
        paging.declare_process(0, 1 << 22);
        // half the pages read-only so both migration modes appear
        paging.set_readonly(0, 0, 16 * 4096);
        memnet::Network net(mesh);

        const uint64_t page_count = 32;
        std::map<uint64_t, uint64_t> shadow;  // vpage -> authoritative frame
        uint64_t pkid = 0;
        for (uint64_t p = 0; p < page_count; ++p)
            shadow[p] = paging.translate(0, p * 4096, 0).paddr / 4096;

        uint64_t cycles = 100 + draw_below(rng, 400);
        for (uint64_t cycle = 0; cycle < cycles; ++cycle) {
            for (const auto& d : net.step(cycle)) {
                if (d.packet.kind == memnet::PacketKind::MIGRATION_DATA) {
                    if (auto dst = paging.on_migration_data_delivered(uint64_t(d.packet.op_ref))) {
                        memnet::Packet ack;
                        ack.id = pkid++;
                        ack.kind = memnet::PacketKind::MIGRATION_ACK;
                        ack.src_cube = *dst;
                        ack.dst_cube = 0;
                        ack.payload_bits = 128;
                        ack.op_ref = d.packet.op_ref;
                        if (!net.try_inject(ack, cycle)) ok = false;
                    }
                } else if (d.packet.kind == memnet::PacketKind::MIGRATION_ACK) {
                    paging.on_migration_ack(uint64_t(d.packet.op_ref), cycle);
                }
            }
            auto step = paging.step_dma(cycle, [&](memnet::Packet& p) {
                p.id = pkid++;
                return net.try_inject(p, cycle);
            });
            for (const auto& ev : step.completed) {
                if (!ev.aborted) shadow[ev.page.vpage] = *paging.peek_frame(ev.page);
            }

            // random accesses: any OK translate must serve the authoritative
            // frame (the old frame while a non-blocking migration is in
            // flight, the new frame only after the table update)
            for (int a = 0; a < 3; ++a) {
                uint64_t p = draw_below(rng, page_count);
                auto tr = paging.translate(0, p * 4096 + draw_below(rng, 4096), p);
                if (tr.status == paging::TranslateResult::Status::OK && tr.paddr / 4096 != shadow[p])
                    ok = false;
            }
            if (draw_below(rng, 4) == 0) {
                uint64_t p = draw_below(rng, page_count);
                paging.request_migration({0, p}, int(draw_below(rng, 16)), cycle, -1);
            }
            auto fa = paging.frame_accounting();
            if (fa.free + fa.mapped + fa.inflight_new + fa.draining != fa.total) ok = false;
        }
        ++scenarios;
    }
    report(4, "migration coherence under randomized interleavings", ok,
           std::to_string(scenarios) + " scenarios");
}

// --- 5. RL numerics ---------------------------------------------------------
void criterion_rl_numerics() {
    bool ok = true;
    std::mt19937_64 rng(99);
    int nets = 0;
    uint64_t seed = 0;
    double worst_dq = 0, worst_grad = 0;
    while (nets < 100) {
        agent::QNetwork net(6, 8, 8, 4, 5000 + seed++);
        agent::StateVector s(6);
        for (auto& v : s) v = 2.0 * draw_u01(rng) - 1.0;
        if (net.min_preactivation(s) < 1e-2) continue;  // keep clear of relu kinks

        auto q1 = net.forward(s);
        agent::QNetwork shifted = net;
        double c = 4.0 * draw_u01(rng) - 2.0;
        for (auto& b : shifted.advantage_bias()) b += c;
        auto q2 = shifted.forward(s);
        for (size_t a = 0; a < q1.size(); ++a) worst_dq = std::max(worst_dq, std::abs(q2[a] - q1[a]));

        int action = int(draw_below(rng, 4));
        double y = 2.0 * draw_u01(rng) - 1.0;
        auto analytic = net.sample_gradient(s, action, y);
        auto& params = net.params();
        const double h = 1e-4;
        for (size_t i = 0; i < params.size(); ++i) {
            double saved = params[i];
            params[i] = saved + h;
            double up = net.sample_loss(s, action, y);
            params[i] = saved - h;
            double down = net.sample_loss(s, action, y);
            params[i] = saved;
            double fd = (up - down) / (2 * h);
            double denom = std::max({1e-8, std::abs(fd), std::abs(analytic[i])});
            worst_grad = std::max(worst_grad, std::abs(fd - analytic[i]) / denom);
        }
        ++nets;
    }
    ok = worst_dq <= 1e-6 && worst_grad <= 1e-3;
    report(5, "dueling invariance and finite-difference gradients on 100 nets", ok,
           "max |dQ| = " + harness::format_double(worst_dq) +
               ", max grad err = " + harness::format_double(worst_grad));
}

// --- 6. reward and action semantics -----------------------------------------
void criterion_reward_actions() {
    bool ok = true;
    ok = ok && agent::compute_reward(0.50, 0.60, 1e-3) == 1;
    ok = ok && agent::compute_reward(0.60, 0.50, 1e-3) == -1;
    ok = ok && agent::compute_reward(0.55, 0.55, 1e-3) == 0;

    memnet::MeshConfig mesh;
    std::mt19937_64 rng(3);
    using agent::Action;
    using agent::ActionEffect;
    auto eff = agent::apply_action(Action::DEFAULT_MAPPING, 5, 2, mesh, 125, rng);
    ok = ok && eff.kind == ActionEffect::Kind::NONE;

    // diagonal formula (1,0) -> (2,3); corner neighbor sets; interval clamps
    int cc = memnet::cube_id_of({1, 0}, mesh);
    eff = agent::apply_action(Action::FAR_DATA_REMAP, cc, 2, mesh, 125, rng);
    ok = ok && eff.kind == ActionEffect::Kind::MIGRATE_PAGE &&
         eff.target_cube == memnet::cube_id_of({2, 3}, mesh);
    eff = agent::apply_action(Action::FAR_COMPUTE_REMAP, cc, 2, mesh, 125, rng);
    ok = ok && eff.kind == ActionEffect::Kind::COMPUTE_REMAP &&
         eff.target_cube == memnet::cube_id_of({2, 3}, mesh);
    for (int i = 0; i < 32; ++i) {
        auto near = agent::apply_action(Action::NEAR_DATA_REMAP, 15, 2, mesh, 125, rng);
        bool is_neighbor = near.target_cube == memnet::cube_id_of({2, 3}, mesh) ||
                           near.target_cube == memnet::cube_id_of({3, 2}, mesh);
        ok = ok && near.kind == ActionEffect::Kind::MIGRATE_PAGE && is_neighbor;
        auto nearc = agent::apply_action(Action::NEAR_COMPUTE_REMAP, 0, 2, mesh, 125, rng);
        bool is_n0 = nearc.target_cube == memnet::cube_id_of({1, 0}, mesh) ||
                     nearc.target_cube == memnet::cube_id_of({0, 1}, mesh);
        ok = ok && nearc.kind == ActionEffect::Kind::COMPUTE_REMAP && is_n0;
    }
    eff = agent::apply_action(Action::SOURCE_COMPUTE_REMAP, 5, 11, mesh, 125, rng);
    ok = ok && eff.kind == ActionEffect::Kind::COMPUTE_REMAP && eff.target_cube == 11;

    ok = ok && agent::clamp_interval_step(100, -1) == 100;
    ok = ok && agent::clamp_interval_step(100, +1) == 125;
    ok = ok && agent::clamp_interval_step(125, +1) == 167;
    ok = ok && agent::clamp_interval_step(167, +1) == 250;
    ok = ok && agent::clamp_interval_step(250, +1) == 250;
    ok = ok && agent::clamp_interval_step(250, -1) == 167;
    report(6, "reward signs and all eight action effects", ok, "fixtures on a 4x4 mesh");
}

// --- 7. TOM oracle -----------------------------------------------------------
void criterion_tom() {
    memnet::MeshConfig mesh;
    memnet::DramMapper mapper(mesh, memnet::CubeGeometry{}, 64 * 1024, 4096);
    std::mt19937_64 rng(424242);
    std::vector<int> candidates{0, 2, 5};
    int agree = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<offload::WindowOp> window;
        for (int i = 0; i < 20; ++i) {
            offload::WindowOp w;
            w.dest_frame = draw_below(rng, mapper.total_frames());
            w.src1_frame = draw_below(rng, mapper.total_frames());
            if (draw_below(rng, 2)) w.src2_frame = draw_below(rng, mapper.total_frames());
            window.push_back(w);
        }
        uint64_t best_score = ~0ULL;
        int best = candidates[0];
        for (int v : candidates) {
            mapper.set_variant(v);
            uint64_t score = 0;
            for (const auto& w : window) {
                auto cc = memnet::coord_of(mapper.cube_of_frame(w.dest_frame), mesh);
                score += 64 * uint64_t(memnet::manhattan(
                                  memnet::coord_of(mapper.cube_of_frame(w.src1_frame), mesh), cc));
                if (w.src2_frame)
                    score += 64 * uint64_t(memnet::manhattan(
                                      memnet::coord_of(mapper.cube_of_frame(*w.src2_frame), mesh), cc));
            }
            if (score < best_score) {
                best_score = score;
                best = v;
            }
        }
        mapper.set_variant(0);
        if (offload::tom_epoch_select(window, mapper, candidates, 0, mesh) == best) ++agree;
    }
    report(7, "tom_epoch_select matches the brute-force scorer", agree == 100,
           std::to_string(agree) + "/100 seeded trials");
}

// --- 8. determinism ----------------------------------------------------------
void criterion_determinism() {
    bool ok = true;
    std::string combos;
    for (const char* tech : {"BNMP", "LDB", "PEI"}) {
        for (const char* remap : {"none", "TOM", "AIMM"}) {
            std::string text = std::string("mesh.width = 4\nmesh.height = 4\n") +
                               "cube.capacity_bytes = 16777216\n" +
                               "offload.technique = " + tech + "\n" +
                               "offload.remapper = " + remap + "\n" +
                               "agent.eps_decay_ticks = 100\n" +
                               "sim.repeats = 2\nsim.seed = 11\n" +
                               "trace.generate = KM_LIKE:n=400\n";
            harness::SimConfig cfg = harness::parse_config(text);
            std::string a = harness::run_simulation(cfg).serialize_all();
            std::string b = harness::run_simulation(cfg).serialize_all();
            if (a != b) {
                ok = false;
                combos += std::string(tech) + "/" + remap + " ";
            }
        }
    }
    report(8, "byte-identical reports for identical config and seed (9 combos)", ok,
           ok ? "BNMP/LDB/PEI x none/TOM/AIMM" : ("mismatch: " + combos));
}

// --- 9 and 10. directional learning criteria --------------------------------
std::string hotspot_config(const std::string& remapper) {
    return "mesh.width = 4\n"
           "mesh.height = 4\n"
           "cube.capacity_bytes = 8388608\n"
           "cube.compute_width = 1\n"
           "cube.nmp_table_entries = 32\n"
           "paging.policy = hotspot\n"
           "offload.technique = BNMP\n"
           "offload.remapper = " +
           remapper +
           "\n"
           "agent.initial_interval = 100\n"
           "agent.eps_decay_ticks = 1200\n"
           "agent.eps_end = 0.01\n"
           "agent.lr = 0.003\n"
           "agent.gamma = 0.5\n"
           "agent.train_period = 2\n"
           "agent.reward_tol = 0.02\n"
           "sim.repeats = 5\n"
           "trace.generate = SPMV_LIKE:n=8000\n";
}

void criteria_learning() {
    auto t0 = Clock::now();
    harness::SimConfig aimm = harness::parse_config(hotspot_config("AIMM"));
    harness::SimConfig plain = harness::parse_config(hotspot_config("none"));
    int conv_pass = 0, order_pass = 0;
    std::string detail9, detail10;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        harness::MetricsReport r = harness::run_simulation(aimm, seed);
        const auto& first = r.repeats.front();
        const auto& last = r.repeats.back();
        bool conv = last.opc > first.opc && last.avg_hop < first.avg_hop;
        if (conv) ++conv_pass;
        harness::MetricsReport base = harness::run_simulation(plain, seed);
        bool order = last.opc >= base.opc;
        if (order) ++order_pass;
        detail9 += harness::format_double(first.opc) + "->" + harness::format_double(last.opc) + " ";
        detail10 += harness::format_double(last.opc) + (order ? ">=" : "<") +
                    harness::format_double(base.opc) + " ";
    }
    double secs = seconds_since(t0);
    report(9, "learning convergence on the hotspot workload (>=3/5 seeds)",
           conv_pass >= 3 && secs < 600.0,
           std::to_string(conv_pass) + "/5 seeds, opc " + detail9 + "in " +
               harness::format_double(secs) + "s");
    report(10, "BNMP+AIMM final repeat beats plain BNMP (>=3/5 seeds)", order_pass >= 3,
           std::to_string(order_pass) + "/5 seeds: " + detail10);
}

// --- 11. energy arithmetic ---------------------------------------------------
void criterion_energy() {
    using namespace harness;
    bool ok = true;
    EnergyTallies net;
    net.network_bit_hops = 512 * 3;
    ok = ok && compute_energy(net).network_fj == 7'680'000;  // 7,680 pJ

    EnergyTallies mem;
    mem.memory_bits = 512;
    ok = ok && compute_energy(mem).memory_fj == 6'144'000;  // 6,144 pJ

    EnergyTallies rep;
    rep.replay_accesses = 100;
    ok = ok && compute_energy(rep).replay_fj == 230'000'000;  // 230 nJ
    ok = ok && EnergyBreakdown::nj(compute_energy(rep).replay_fj) == 230.0;

    std::mt19937_64 rng(8);
    for (int i = 0; i < 50; ++i) {
        EnergyTallies t;
        t.network_bit_hops = draw_below(rng, 1 << 20);
        t.memory_bits = draw_below(rng, 1 << 20);
        t.page_info_accesses = draw_below(rng, 1 << 16);
        t.nmp_table_accesses = draw_below(rng, 1 << 16);
        t.migration_queue_accesses = draw_below(rng, 1 << 16);
        t.mdma_accesses = draw_below(rng, 1 << 16);
        t.weight_accesses = draw_below(rng, 1 << 16);
        t.replay_accesses = draw_below(rng, 1 << 16);
        t.state_buffer_accesses = draw_below(rng, 1 << 16);
        EnergyBreakdown b = compute_energy(t);
        uint64_t sum = b.network_fj + b.memory_fj + b.page_info_fj + b.nmp_buffer_fj +
                       b.migration_queue_fj + b.mdma_fj + b.weight_fj + b.replay_fj + b.state_buffer_fj;
        ok = ok && b.total_fj == sum;
    }
    report(11, "energy constants exact on unit tallies; total == component sum", ok,
           "7680 pJ / 6144 pJ / 230 nJ reproduced");
}

// --- 12. workload analytics conservation -------------------------------------
void criterion_analytics() {
    bool ok = true;
    uint64_t traces = 0;
    using trace::KernelKind;
    const KernelKind kinds[] = {KernelKind::MAC,     KernelKind::RD,      KernelKind::SPMV_LIKE,
                                KernelKind::PR_LIKE, KernelKind::BP_LIKE, KernelKind::KM_LIKE};
    for (uint64_t seed = 0; seed < 50; ++seed) {
        trace::OpTrace t = trace::generate_kernel_trace(kinds[seed % 6], 120 + seed * 17, seed);
        std::set<std::pair<uint32_t, uint64_t>> pages;
        for (const auto& op : t.ops) {
            pages.insert({op.process_id, op.dest_vaddr / t.page_size_bytes});
            pages.insert({op.process_id, op.src1_vaddr / t.page_size_bytes});
            if (op.src2_vaddr) pages.insert({op.process_id, *op.src2_vaddr / t.page_size_bytes});
        }
        auto bins = trace::classify_page_accesses(t, {2, 16, 128});
        uint64_t bin_sum = 0;
        for (auto b : bins) bin_sum += b;
        auto prof = trace::affinity_analysis(t, 8);
        uint64_t quad_sum = 0;
        for (auto q : prof.quadrant_counts) quad_sum += q;
        if (bin_sum != pages.size() || quad_sum != pages.size()) ok = false;
        ++traces;
    }
    report(12, "classification bins and affinity quadrants cover all pages", ok,
           std::to_string(traces) + " fuzzed traces");
}

}  // namespace

int main() {
    std::printf("nmpsim acceptance suite\n");
    auto t0 = Clock::now();
    criterion_routing();
    criterion_losslessness();
    criterion_bijection();
    criterion_migration_coherence();
    criterion_rl_numerics();
    criterion_reward_actions();
    criterion_tom();
    criterion_determinism();
    criteria_learning();
    criterion_energy();
    criterion_analytics();
    std::printf("%d criterion(s) failed; total runtime %.1fs\n", failures, seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
