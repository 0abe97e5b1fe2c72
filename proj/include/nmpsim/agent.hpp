#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nmpsim/memnet.hpp"
#include "nmpsim/offload.hpp"

namespace nmpsim::agent {

// The eight discrete control actions.
enum class Action : uint8_t {
    DEFAULT_MAPPING = 0,
    NEAR_DATA_REMAP = 1,
    FAR_DATA_REMAP = 2,
    NEAR_COMPUTE_REMAP = 3,
    FAR_COMPUTE_REMAP = 4,
    SOURCE_COMPUTE_REMAP = 5,
    INCREASE_INTERVAL = 6,
    DECREASE_INTERVAL = 7,
};
inline constexpr int kActionCount = 8;
const char* action_name(Action a);

// Agent invocation intervals, in cycles.
inline constexpr std::array<int, 4> kIntervals{100, 125, 167, 250};

struct AgentConfig {
    double gamma = 0.95;
    double lr = 1e-3;
    int batch_size = 32;
    int train_period = 4;       // ticks between training steps
    double eps_start = 1.0;
    double eps_end = 0.05;
    uint64_t eps_decay_ticks = 10000;
    uint32_t replay_capacity = 32768;
    int hidden = 256;
    int initial_interval = 250;  // must be one of kIntervals
    double reward_tol = 1e-3;    // relative OPC dead-band
    double latency_norm = 1000.0;
    double migration_latency_norm = 2000.0;
    bool use_target_net = false;
    int target_sync_period = 64;  // train steps between syncs
    uint64_t seed = 1;

    void validate() const;
};

// State layout: nine blocks, each zero-padded to a common block size
// max(cubes, MCs, H, 2), giving 9*16 = 144 entries for the default
// 4x4 mesh / 4 MCs / H=4 configuration:
//   0 per-cube NMP table occupancy (running avg, /capacity)
//   1 per-cube row-buffer hit rate (running avg)
//   2 per-MC queue occupancy (running avg, /capacity)
//   3 global action history (ids /7, newest first)
//   4 page access rate, migrations-per-access (clamped to [0,1])
//   5 page hop-count history (/max mesh distance)
//   6 page round-trip latency history (/latency_norm, clamped)
//   7 page migration latency history (/migration_latency_norm, clamped)
//   8 page action history (ids /7)
struct StateLayout {
    int cubes = 16;
    int mcs = 4;
    int history = 4;

    int block() const { return std::max({cubes, mcs, history, 2}); }
    int length() const { return 9 * block(); }
};

using StateVector = std::vector<double>;

StateVector encode_state(const StateLayout& layout, const offload::SystemCounters& counters,
                         const offload::PageInfoEntry& page, const offload::HistoryRing& global_actions,
                         uint64_t mc_total_page_accesses, int max_hop, const AgentConfig& cfg);

struct Experience {
    StateVector s;
    int action = 0;
    int reward = 0;  // in {-1, 0, +1}
    StateVector s_next;
    bool terminal = false;
};

// Bounded ring with seeded uniform sampling (without replacement per batch).
class ReplayBuffer {
  public:
    explicit ReplayBuffer(uint32_t capacity) : capacity_(capacity) {}
    void push(Experience e);
    std::vector<const Experience*> sample(std::mt19937_64& rng, int batch);
    size_t size() const { return ring_.size(); }
    uint32_t capacity() const { return capacity_; }
    void clear();

    uint64_t accesses = 0;  // energy tally: stores + sampled reads

  private:
    uint32_t capacity_;
    std::vector<Experience> ring_;
    size_t write_ = 0;
};

// Dueling MLP: trunk in->h1->h2 with ReLU, then a scalar value head and a
// per-action advantage head, aggregated as Q = V + A - mean(A). Parameters
// live in one flat array (checkpoints and finite-difference tests index it).
class QNetwork {
  public:
    QNetwork(int input, int h1, int h2, int actions, uint64_t seed);

    std::vector<double> forward(std::span<const double> s) const;

    struct TrainSample {
        const StateVector* s;
        int action;
        double target_q;  // y
    };
    // One SGD step on mean squared (y - Q(s,a)); returns the pre-update loss.
    double train(const std::vector<TrainSample>& batch, double lr);

    // Squared-loss for a single sample at the current parameters (used by the
    // finite-difference gradient oracle).
    double sample_loss(std::span<const double> s, int action, double y) const;
    // Smallest |pre-activation| across both hidden layers; the gradient
    // oracle rejects states whose units sit within a finite-difference step
    // of a ReLU kink.
    double min_preactivation(std::span<const double> s) const;
    std::vector<double> sample_gradient(std::span<const double> s, int action, double y) const;

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    int input_dim() const { return in_; }
    int action_count() const { return actions_; }

    // Advantage-head bias span, for the aggregation-invariance property.
    std::span<double> advantage_bias();

    void save(const std::string& path) const;
    static QNetwork load(const std::string& path);

    uint64_t weight_accesses = 0;  // energy tally: forwards + backwards

  private:
    struct Fwd {
        std::vector<double> z1, a1, z2, a2;
        double v;
        std::vector<double> adv;
        std::vector<double> q;
    };
    Fwd run(std::span<const double> s) const;
    void backward(const Fwd& f, std::span<const double> s, int action, double dq, std::vector<double>& grad) const;

    int in_, h1_, h2_, actions_;
    std::vector<double> params_;
    // offsets into params_
    size_t w1_, b1_, w2_, b2_, wv_, bv_, wa_, ba_;
};

int compute_reward(double opc_prev, double opc_cur, double tol);

Action select_action(const QNetwork& net, const StateVector& s, double eps, std::mt19937_64& rng);

// What an action asks the system to do; the simulator executes it.
struct ActionEffect {
    enum class Kind : uint8_t { NONE, MIGRATE_PAGE, COMPUTE_REMAP, SET_INTERVAL } kind = Kind::NONE;
    int target_cube = -1;
    int new_interval = 0;
};

// Resolve an action against the candidate page's recent compute cube. Corner
// compute cubes draw their random neighbor from the 2 or 3 that exist.
ActionEffect apply_action(Action a, int compute_cube, int src1_cube, const memnet::MeshConfig& mesh,
                          int current_interval, std::mt19937_64& rng);

int clamp_interval_step(int current, int delta);  // move within kIntervals

// The agent proper: holds the network, replay buffer, epsilon schedule and
// tick bookkeeping. The simulator feeds it encoded states and applies the
// effects it returns. Training is synchronous (the deterministic mode).
class Agent {
  public:
    Agent(const AgentConfig& cfg, const StateLayout& layout);

    struct TickResult {
        Action action = Action::DEFAULT_MAPPING;
        int reward = 0;
        bool stored_experience = false;
        bool trained = false;
        double loss = 0.0;
        double epsilon = 0.0;
    };
    // One agent invocation with a candidate available. opc is the measurement
    // over the elapsed interval.
    TickResult tick(const StateVector& s, double opc);

    void end_episode();  // drop the pending (s, a); model and replay persist

    const offload::HistoryRing& global_actions() const { return global_actions_; }
    double epsilon() const;
    uint64_t ticks() const { return ticks_; }
    QNetwork& net() { return net_; }
    ReplayBuffer& replay() { return replay_; }
    uint64_t state_buffer_accesses = 0;

    const AgentConfig& config() const { return cfg_; }

  private:
    AgentConfig cfg_;
    QNetwork net_;
    std::optional<QNetwork> target_;
    ReplayBuffer replay_;
    offload::HistoryRing global_actions_;
    std::mt19937_64 rng_;
    uint64_t ticks_ = 0;
    uint64_t train_steps_ = 0;
    std::optional<StateVector> prev_state_;
    int prev_action_ = 0;
    std::optional<double> prev_opc_;

    double target_max_q(const StateVector& s_next);
};

}  // namespace nmpsim::agent
