#pragma once

#include <array>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nmpsim/agent.hpp"
#include "nmpsim/config.hpp"
#include "nmpsim/memnet.hpp"
#include "nmpsim/metrics.hpp"
#include "nmpsim/offload.hpp"
#include "nmpsim/paging.hpp"
#include "nmpsim/trace.hpp"

namespace nmpsim::harness {

// Trace-driven NMP mesh simulation: MCs at the corner cubes issue NMP-ops
// over the mesh, cubes execute them against row-buffer-modeled DRAM, the
// migration DMA moves pages, and the optional agent or TOM remapper adjusts
// the mapping while the run progresses. One instance owns one logical clock.
class Simulator {
  public:
    Simulator(const SimConfig& cfg, uint64_t seed_override);

    MetricsReport run();  // all repeats, report on the final one

    bool collect_events = false;
    std::vector<memnet::NetEvent> events;

  private:
    enum class Stage : uint8_t { PENDING, MC_QUEUED, WAIT_UNLOCK, ISSUED, HOST_WAIT, DONE };

    struct OpRec {
        trace::NmpOp op;
        Stage stage = Stage::PENDING;
        int mc = -1;
        int core = -1;
        int compute_cube = -1;
        uint64_t issue_cycle = 0;
        int pending = 0;
        bool host = false;
        bool forward_result = false;
        bool has_src2 = false;
        std::array<uint64_t, 3> paddr{};  // dest, src1, src2
        std::array<int, 3> cube{};
    };

    struct DramReq {
        int vault;
        int bank;
        int row;
        enum class Done : uint8_t { OPERAND_LOCAL, OPERAND_REMOTE, WRITE, HOST_RESULT_WRITE } done;
        uint64_t op_idx = 0;
        int slot = 0;
        uint64_t frame = 0;  // for read drain tracking
        int reply_to = -1;   // cube to send a DATA_RESP to (remote reads)
    };

    struct Event {
        enum class Type : uint8_t { DRAM_DONE, COMPUTE_DONE, HOST_COMPUTE_DONE } type;
        uint64_t op_idx = 0;
        int cube = 0;
        DramReq req{};
    };

    // --- construction-time data (stable across repeats)
    SimConfig cfg_;
    uint64_t master_seed_;
    std::vector<trace::NmpOp> stream_;  // merged issue order, re-stamped pids
    std::vector<trace::ProcessDesc> processes_;
    std::vector<trace::ReadOnlyRegion> readonly_;
    agent::StateLayout layout_;
    std::vector<int> mc_corners_;
    int mc_count_ = 4;
    int max_hop_ = 1;

    // --- per-repeat machinery
    std::unique_ptr<memnet::DramMapper> mapper_;
    std::unique_ptr<memnet::Network> net_;
    std::vector<memnet::CubeState> cubes_;
    std::unique_ptr<paging::PagingSystem> paging_;
    std::vector<offload::PageInfoCache> page_info_;
    std::unique_ptr<offload::SystemCounters> counters_;
    std::unique_ptr<offload::ComputeRemapTable> remap_;
    std::vector<offload::HostCache> host_caches_;
    std::vector<OpRec> ops_;
    std::vector<std::deque<uint64_t>> mc_queue_;
    std::vector<std::vector<std::deque<DramReq>>> dram_q_;   // [cube][vault]
    std::vector<uint64_t> dram_pending_;                     // per cube
    std::vector<std::vector<uint64_t>> bank_busy_until_;     // [cube][vault*banks+bank]
    std::vector<std::deque<uint64_t>> compute_ready_;        // per cube
    std::map<uint64_t, std::vector<Event>> events_at_;
    std::vector<std::vector<std::deque<memnet::Packet>>> pending_inject_;  // [cube][vc]
    std::vector<uint64_t> per_cube_completions_;
    std::vector<offload::WindowOp> tom_window_;

    // --- agent (persists across repeats)
    std::unique_ptr<agent::Agent> agent_;
    std::mt19937_64 action_rng_;
    int candidate_cursor_ = 0;

    // --- clock/accounting
    uint64_t cycle_ = 0;
    uint64_t next_op_ = 0;
    uint64_t completed_ = 0;
    uint64_t migration_data_delivered_ = 0;
    int current_interval_ = 250;
    uint64_t interval_start_ = 0;
    uint64_t interval_ops_ = 0;
    uint64_t tick_ops_ = 0;
    uint64_t tick_start_ = 0;
    uint64_t tick_mig_base_ = 0;
    uint64_t next_tom_epoch_ = 0;
    uint64_t packet_ids_ = 0;
    uint64_t memory_bits_ = 0;
    uint64_t nmp_table_accesses_ = 0;
    uint64_t page_accesses_total_ = 0;
    uint64_t page_accesses_migrated_ = 0;
    uint64_t prev_op_hops_ = 0;
    uint64_t prev_row_hits_ = 0;
    uint64_t prev_row_accesses_ = 0;
    std::vector<uint64_t> interval_cube_base_;
    MetricsReport report_;
    uint64_t agent_weight_base_ = 0;
    uint64_t agent_replay_base_ = 0;
    uint64_t agent_state_base_ = 0;

    // --- helpers
    void build_stream();
    void reset_repeat();
    void run_repeat(int repeat);
    void step_cycle();
    void dispatch_stream();
    void mc_issue();
    bool try_issue(uint64_t op_idx);
    void handle_delivery(const memnet::DeliveredPacket& d);
    void enqueue_dram(int cube, const DramReq& req);
    void dram_step();
    void compute_stage();
    void drain_injections();
    void schedule_event(uint64_t cycle, Event ev);
    void run_events();
    void operand_ready(uint64_t op_idx);
    void finish_compute(uint64_t op_idx);
    void complete_at_mc(uint64_t op_idx);
    void queue_packet(memnet::Packet p);
    void periodic_counters();
    void agent_tick();
    void tom_epoch();
    void record_interval_row(uint64_t end_cycle);
    uint64_t opc_den() const;
    bool count_migration_in_opc() const;
    paging::PageKey key_of(const trace::NmpOp& op, int slot) const;
    void touch_issue_page_info(OpRec& rec);
    void apply_migration_completions(const paging::PagingSystem::DmaStep& step);
    memnet::Packet make_packet(memnet::PacketKind kind, memnet::PayloadTag tag, int src, int dst, int bits,
                               int64_t op_ref, int aux = 0);
    void finish_repeat_metrics(int repeat);
};

MetricsReport run_simulation(const SimConfig& cfg, std::optional<uint64_t> seed_override = std::nullopt,
                             bool collect_events = false, std::vector<memnet::NetEvent>* events_out = nullptr);

}  // namespace nmpsim::harness
