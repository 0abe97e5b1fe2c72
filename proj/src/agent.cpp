#include "nmpsim/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstring>
#include <fstream>

namespace nmpsim::agent {

const char* action_name(Action a) {
    switch (a) {
        case Action::DEFAULT_MAPPING: return "default_mapping";
        case Action::NEAR_DATA_REMAP: return "near_data_remap";
        case Action::FAR_DATA_REMAP: return "far_data_remap";
        case Action::NEAR_COMPUTE_REMAP: return "near_compute_remap";
        case Action::FAR_COMPUTE_REMAP: return "far_compute_remap";
        case Action::SOURCE_COMPUTE_REMAP: return "source_compute_remap";
        case Action::INCREASE_INTERVAL: return "increase_interval";
        case Action::DECREASE_INTERVAL: return "decrease_interval";
    }
    return "?";
}

void AgentConfig::validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0,1]");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch_size < 1 || train_period < 1) throw ConfigError("batch_size/train_period must be positive");
    if (eps_start < 0 || eps_start > 1 || eps_end < 0 || eps_end > 1)
        throw ConfigError("epsilon bounds must be in [0,1]");
    if (replay_capacity < 1) throw ConfigError("replay capacity must be positive");
    if (hidden < 1) throw ConfigError("hidden width must be positive");
    if (std::find(kIntervals.begin(), kIntervals.end(), initial_interval) == kIntervals.end())
        throw ConfigError("initial_interval must be one of {100,125,167,250}");
    if (!(reward_tol >= 0)) throw ConfigError("reward_tol must be non-negative");
}

StateVector encode_state(const StateLayout& layout, const offload::SystemCounters& counters,
                         const offload::PageInfoEntry& page, const offload::HistoryRing& global_actions,
                         uint64_t mc_total_page_accesses, int max_hop, const AgentConfig& cfg) {
    const int B = layout.block();
    StateVector s(size_t(layout.length()), 0.0);
    auto clamp01 = [](double v) { return std::min(1.0, std::max(0.0, v)); };
    auto block = [&](int b) { return s.begin() + b * B; };

    std::copy(counters.nmp_occupancy_avg.begin(), counters.nmp_occupancy_avg.end(), block(0));
    std::copy(counters.row_hit_avg.begin(), counters.row_hit_avg.end(), block(1));
    std::copy(counters.mc_queue_avg.begin(), counters.mc_queue_avg.end(), block(2));

    auto ga = global_actions.snapshot();
    for (size_t i = 0; i < ga.size(); ++i) *(block(3) + long(i)) = ga[i] / double(kActionCount - 1);

    *(block(4) + 0) = mc_total_page_accesses
                          ? clamp01(double(page.access_count) / double(mc_total_page_accesses))
                          : 0.0;
    *(block(4) + 1) = clamp01(page.migrations_per_access());

    double hop_den = std::max(1, max_hop);
    auto hops = page.hop_history.snapshot();
    for (size_t i = 0; i < hops.size(); ++i) *(block(5) + long(i)) = clamp01(hops[i] / hop_den);
    auto lats = page.latency_history.snapshot();
    for (size_t i = 0; i < lats.size(); ++i) *(block(6) + long(i)) = clamp01(lats[i] / cfg.latency_norm);
    auto mlats = page.migration_latency_history.snapshot();
    for (size_t i = 0; i < mlats.size(); ++i)
        *(block(7) + long(i)) = clamp01(mlats[i] / cfg.migration_latency_norm);
    auto acts = page.action_history.snapshot();
    for (size_t i = 0; i < acts.size(); ++i) *(block(8) + long(i)) = acts[i] / double(kActionCount - 1);
    return s;
}

// ---------------------------------------------------------------------------

void ReplayBuffer::push(Experience e) {
    ++accesses;
    if (ring_.size() < capacity_) {
        ring_.push_back(std::move(e));
    } else {
        ring_[write_ % capacity_] = std::move(e);
    }
    ++write_;
}

std::vector<const Experience*> ReplayBuffer::sample(std::mt19937_64& rng, int batch) {
    size_t m = std::min(size_t(batch), ring_.size());
    std::vector<size_t> idx(ring_.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<const Experience*> out;
    out.reserve(m);
    for (size_t i = 0; i < m; ++i) {
        size_t j = i + size_t(draw_below(rng, idx.size() - i));
        std::swap(idx[i], idx[j]);
        out.push_back(&ring_[idx[i]]);
    }
    accesses += m;
    return out;
}

void ReplayBuffer::clear() {
    ring_.clear();
    write_ = 0;
}

// ---------------------------------------------------------------------------

QNetwork::QNetwork(int input, int h1, int h2, int actions, uint64_t seed)
    : in_(input), h1_(h1), h2_(h2), actions_(actions) {
    if (input < 1 || h1 < 1 || h2 < 1 || actions < 1) throw ConfigError("bad network dimensions");
    w1_ = 0;
    b1_ = w1_ + size_t(h1_) * size_t(in_);
    w2_ = b1_ + size_t(h1_);
    b2_ = w2_ + size_t(h2_) * size_t(h1_);
    wv_ = b2_ + size_t(h2_);
    bv_ = wv_ + size_t(h2_);
    wa_ = bv_ + 1;
    ba_ = wa_ + size_t(actions_) * size_t(h2_);
    params_.assign(ba_ + size_t(actions_), 0.0);

    std::mt19937_64 rng(mix_seed(seed, 0x71e7));
    auto init = [&](size_t off, size_t count, int fan_in) {
        double bound = 1.0 / std::sqrt(double(fan_in));
        for (size_t i = 0; i < count; ++i) params_[off + i] = (2.0 * draw_u01(rng) - 1.0) * bound;
    };
    init(w1_, size_t(h1_) * size_t(in_), in_);
    init(w2_, size_t(h2_) * size_t(h1_), h1_);
    init(wv_, size_t(h2_), h2_);
    init(wa_, size_t(actions_) * size_t(h2_), h2_);
}

QNetwork::Fwd QNetwork::run(std::span<const double> s) const {
    if (int(s.size()) != in_) throw InvalidParameter("state length does not match network input");
    Fwd f;
    f.z1.resize(size_t(h1_));
    f.a1.resize(size_t(h1_));
    for (int j = 0; j < h1_; ++j) {
        double acc = params_[b1_ + size_t(j)];
        const double* w = &params_[w1_ + size_t(j) * size_t(in_)];
        for (int i = 0; i < in_; ++i) acc += w[i] * s[size_t(i)];
        f.z1[size_t(j)] = acc;
        f.a1[size_t(j)] = acc > 0 ? acc : 0.0;
    }
    f.z2.resize(size_t(h2_));
    f.a2.resize(size_t(h2_));
    for (int k = 0; k < h2_; ++k) {
        double acc = params_[b2_ + size_t(k)];
        const double* w = &params_[w2_ + size_t(k) * size_t(h1_)];
        for (int j = 0; j < h1_; ++j) acc += w[j] * f.a1[size_t(j)];
        f.z2[size_t(k)] = acc;
        f.a2[size_t(k)] = acc > 0 ? acc : 0.0;
    }
    f.v = params_[bv_];
    for (int k = 0; k < h2_; ++k) f.v += params_[wv_ + size_t(k)] * f.a2[size_t(k)];
    f.adv.resize(size_t(actions_));
    double mean_adv = 0;
    for (int a = 0; a < actions_; ++a) {
        double acc = params_[ba_ + size_t(a)];
        const double* w = &params_[wa_ + size_t(a) * size_t(h2_)];
        for (int k = 0; k < h2_; ++k) acc += w[k] * f.a2[size_t(k)];
        f.adv[size_t(a)] = acc;
        mean_adv += acc;
    }
    mean_adv /= double(actions_);
    f.q.resize(size_t(actions_));
    for (int a = 0; a < actions_; ++a) f.q[size_t(a)] = f.v + f.adv[size_t(a)] - mean_adv;
    return f;
}

std::vector<double> QNetwork::forward(std::span<const double> s) const { return run(s).q; }

void QNetwork::backward(const Fwd& f, std::span<const double> s, int action, double dq,
                        std::vector<double>& grad) const {
    std::vector<double> da2(size_t(h2_), 0.0);
    // dueling aggregation: dq/dv = 1, dq/dadv[m] = [m==a] - 1/A
    double dv = dq;
    grad[bv_] += dv;
    for (int k = 0; k < h2_; ++k) {
        grad[wv_ + size_t(k)] += dv * f.a2[size_t(k)];
        da2[size_t(k)] += dv * params_[wv_ + size_t(k)];
    }
    for (int m = 0; m < actions_; ++m) {
        double dadv = dq * ((m == action ? 1.0 : 0.0) - 1.0 / double(actions_));
        grad[ba_ + size_t(m)] += dadv;
        const double* w = &params_[wa_ + size_t(m) * size_t(h2_)];
        double* gw = &grad[wa_ + size_t(m) * size_t(h2_)];
        for (int k = 0; k < h2_; ++k) {
            gw[k] += dadv * f.a2[size_t(k)];
            da2[size_t(k)] += dadv * w[k];
        }
    }
    std::vector<double> da1(size_t(h1_), 0.0);
    for (int k = 0; k < h2_; ++k) {
        if (f.z2[size_t(k)] <= 0) continue;
        double dz2 = da2[size_t(k)];
        grad[b2_ + size_t(k)] += dz2;
        const double* w = &params_[w2_ + size_t(k) * size_t(h1_)];
        double* gw = &grad[w2_ + size_t(k) * size_t(h1_)];
        for (int j = 0; j < h1_; ++j) {
            gw[j] += dz2 * f.a1[size_t(j)];
            da1[size_t(j)] += dz2 * w[j];
        }
    }
    for (int j = 0; j < h1_; ++j) {
        if (f.z1[size_t(j)] <= 0) continue;
        double dz1 = da1[size_t(j)];
        grad[b1_ + size_t(j)] += dz1;
        double* gw = &grad[w1_ + size_t(j) * size_t(in_)];
        for (int i = 0; i < in_; ++i) gw[i] += dz1 * s[size_t(i)];
    }
}

double QNetwork::train(const std::vector<TrainSample>& batch, double lr) {
    if (batch.empty()) throw InvalidParameter("training batch must be nonempty");
    std::vector<double> grad(params_.size(), 0.0);
    double loss = 0;
    double inv_b = 1.0 / double(batch.size());
    for (const auto& sample : batch) {
        Fwd f = run(*sample.s);
        double q = f.q[size_t(sample.action)];
        double delta = q - sample.target_q;
        loss += delta * delta * inv_b;
        backward(f, *sample.s, sample.action, 2.0 * delta * inv_b, grad);
        weight_accesses += 3;  // forward + weight/activation reads on the backward pass
    }
    if (!std::isfinite(loss)) throw SimError("training diverged: non-finite loss");
    for (size_t i = 0; i < params_.size(); ++i) params_[i] -= lr * grad[i];
    return loss;
}

double QNetwork::min_preactivation(std::span<const double> s) const {
    Fwd f = run(s);
    double m = std::numeric_limits<double>::infinity();
    for (double z : f.z1) m = std::min(m, std::abs(z));
    for (double z : f.z2) m = std::min(m, std::abs(z));
    return m;
}

double QNetwork::sample_loss(std::span<const double> s, int action, double y) const {
    Fwd f = run(s);
    double delta = f.q[size_t(action)] - y;
    return delta * delta;
}

std::vector<double> QNetwork::sample_gradient(std::span<const double> s, int action, double y) const {
    std::vector<double> grad(params_.size(), 0.0);
    Fwd f = run(s);
    backward(f, s, action, 2.0 * (f.q[size_t(action)] - y), grad);
    return grad;
}

std::span<double> QNetwork::advantage_bias() { return {params_.data() + ba_, size_t(actions_)}; }

void QNetwork::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    const char magic[8] = {'N', 'M', 'P', 'Q', 'N', 'E', 'T', '1'};
    out.write(magic, 8);
    uint32_t dims[4] = {uint32_t(in_), uint32_t(h1_), uint32_t(h2_), uint32_t(actions_)};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(params_.data()), std::streamsize(params_.size() * sizeof(double)));
    if (!out) throw IoError("short write to checkpoint: " + path);
}

QNetwork QNetwork::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "NMPQNET1", 8) != 0) throw IoError("bad checkpoint magic");
    uint32_t dims[4];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in) throw IoError("truncated checkpoint header");
    QNetwork net(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]),
                 static_cast<int>(dims[3]), 0);
    in.read(reinterpret_cast<char*>(net.params_.data()),
            std::streamsize(net.params_.size() * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint payload");
    return net;
}

// ---------------------------------------------------------------------------

int compute_reward(double opc_prev, double opc_cur, double tol) {
    if (opc_prev < 0 || opc_cur < 0) throw InvalidParameter("opc must be non-negative");
    if (opc_cur > opc_prev * (1.0 + tol)) return 1;
    if (opc_cur < opc_prev * (1.0 - tol)) return -1;
    return 0;
}

Action select_action(const QNetwork& net, const StateVector& s, double eps, std::mt19937_64& rng) {
    if (eps < 0 || eps > 1) throw InvalidParameter("epsilon must be in [0,1]");
    if (eps > 0 && draw_u01(rng) < eps) return Action(draw_below(rng, kActionCount));
    auto q = net.forward(s);
    size_t best = 0;
    for (size_t a = 1; a < q.size(); ++a)
        if (q[a] > q[best]) best = a;
    return Action(best);
}

int clamp_interval_step(int current, int delta) {
    int idx = 0;
    for (size_t i = 0; i < kIntervals.size(); ++i)
        if (kIntervals[i] == current) idx = int(i);
    idx = std::clamp(idx + delta, 0, int(kIntervals.size()) - 1);
    return kIntervals[size_t(idx)];
}

ActionEffect apply_action(Action a, int compute_cube, int src1_cube, const memnet::MeshConfig& mesh,
                          int current_interval, std::mt19937_64& rng) {
    ActionEffect eff;
    memnet::Coord c = memnet::coord_of(compute_cube, mesh);
    auto neighbors = [&]() {
        std::vector<int> out;
        if (c.x + 1 < mesh.width) out.push_back(memnet::cube_id_of({c.x + 1, c.y}, mesh));
        if (c.x - 1 >= 0) out.push_back(memnet::cube_id_of({c.x - 1, c.y}, mesh));
        if (c.y + 1 < mesh.height) out.push_back(memnet::cube_id_of({c.x, c.y + 1}, mesh));
        if (c.y - 1 >= 0) out.push_back(memnet::cube_id_of({c.x, c.y - 1}, mesh));
        return out;
    };
    int diagonal = memnet::cube_id_of({mesh.width - 1 - c.x, mesh.height - 1 - c.y}, mesh);
    switch (a) {
        case Action::DEFAULT_MAPPING:
            break;
        case Action::NEAR_DATA_REMAP: {
            auto nb = neighbors();
            eff.kind = ActionEffect::Kind::MIGRATE_PAGE;
            eff.target_cube = nb[size_t(draw_below(rng, nb.size()))];
            break;
        }
        case Action::FAR_DATA_REMAP:
            eff.kind = ActionEffect::Kind::MIGRATE_PAGE;
            eff.target_cube = diagonal;
            break;
        case Action::NEAR_COMPUTE_REMAP: {
            auto nb = neighbors();
            eff.kind = ActionEffect::Kind::COMPUTE_REMAP;
            eff.target_cube = nb[size_t(draw_below(rng, nb.size()))];
            break;
        }
        case Action::FAR_COMPUTE_REMAP:
            eff.kind = ActionEffect::Kind::COMPUTE_REMAP;
            eff.target_cube = diagonal;
            break;
        case Action::SOURCE_COMPUTE_REMAP:
            eff.kind = ActionEffect::Kind::COMPUTE_REMAP;
            eff.target_cube = src1_cube;
            break;
        case Action::INCREASE_INTERVAL:
            eff.kind = ActionEffect::Kind::SET_INTERVAL;
            eff.new_interval = clamp_interval_step(current_interval, +1);
            break;
        case Action::DECREASE_INTERVAL:
            eff.kind = ActionEffect::Kind::SET_INTERVAL;
            eff.new_interval = clamp_interval_step(current_interval, -1);
            break;
    }
    return eff;
}

// ---------------------------------------------------------------------------

Agent::Agent(const AgentConfig& cfg, const StateLayout& layout)
    : cfg_(cfg), net_(layout.length(), cfg.hidden, cfg.hidden, kActionCount, cfg.seed),
      replay_(cfg.replay_capacity), global_actions_(uint32_t(layout.history)),
      rng_(mix_seed(cfg.seed, 0xa6e7)) {
    cfg_.validate();
    if (cfg_.use_target_net) target_.emplace(net_);
}

double Agent::epsilon() const {
    double frac = cfg_.eps_decay_ticks ? std::min(1.0, double(ticks_) / double(cfg_.eps_decay_ticks)) : 1.0;
    return cfg_.eps_start + (cfg_.eps_end - cfg_.eps_start) * frac;
}

double Agent::target_max_q(const StateVector& s_next) {
    const QNetwork& src = cfg_.use_target_net ? *target_ : net_;
    auto q = src.forward(s_next);
    net_.weight_accesses += 1;
    return *std::max_element(q.begin(), q.end());
}

Agent::TickResult Agent::tick(const StateVector& s, double opc) {
    TickResult res;
    res.epsilon = epsilon();
    ++state_buffer_accesses;  // stage s into the information buffer

    if (prev_state_ && prev_opc_) {
        res.reward = compute_reward(*prev_opc_, opc, cfg_.reward_tol);
        Experience e;
        e.s = *prev_state_;
        e.action = prev_action_;
        e.reward = res.reward;
        e.s_next = s;
        e.terminal = false;
        replay_.push(std::move(e));
        res.stored_experience = true;
        ++state_buffer_accesses;  // read the previous state back out
    }

    Action a = select_action(net_, s, res.epsilon, rng_);
    net_.weight_accesses += 1;
    res.action = a;
    global_actions_.push(double(int(a)));
    prev_state_ = s;
    prev_action_ = int(a);
    prev_opc_ = opc;
    ++ticks_;

    if (ticks_ % uint64_t(cfg_.train_period) == 0 && replay_.size() >= size_t(cfg_.batch_size)) {
        auto batch = replay_.sample(rng_, cfg_.batch_size);
        std::vector<QNetwork::TrainSample> samples;
        samples.reserve(batch.size());
        for (const Experience* e : batch) {
            double y = e->terminal ? double(e->reward)
                                   : double(e->reward) + cfg_.gamma * target_max_q(e->s_next);
            samples.push_back({&e->s, e->action, y});
        }
        res.loss = net_.train(samples, cfg_.lr);
        res.trained = true;
        ++train_steps_;
        if (cfg_.use_target_net && train_steps_ % uint64_t(cfg_.target_sync_period) == 0)
            target_->params() = net_.params();
    }
    return res;
}

void Agent::end_episode() {
    prev_state_.reset();
    prev_opc_.reset();
}

}  // namespace nmpsim::agent
