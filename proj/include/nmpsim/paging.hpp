#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "nmpsim/memnet.hpp"
#include "nmpsim/trace.hpp"

namespace nmpsim::paging {

struct PageKey {
    uint32_t pid = 0;
    uint64_t vpage = 0;
    auto operator<=>(const PageKey&) const = default;
};

enum class Permission : uint8_t { READ_ONLY, READ_WRITE };

enum class AllocPolicy : uint8_t { DEFAULT, HOARD, HOTSPOT };

enum class MigrationMode : uint8_t { BLOCKING, NON_BLOCKING };

enum class MigrationState : uint8_t { QUEUED, DMA_ACTIVE, AWAITING_ACK, COMPLETE };

struct MigrationRequest {
    uint64_t id = 0;
    PageKey page;
    int src_cube = 0;
    int dst_cube = 0;
    MigrationMode mode = MigrationMode::BLOCKING;
    MigrationState state = MigrationState::QUEUED;
    uint64_t start_cycle = 0;  // DMA start
    uint64_t end_cycle = 0;    // ack delivery
    int provider_mc = -1;      // MC whose page-info entry triggered the action
};

enum class MigrationOutcome : uint8_t { QUEUED, DROPPED_FULL, DROPPED_INFLIGHT, DROPPED_NOOP };

struct MigrationEvent {
    PageKey page;
    int src_cube;
    int dst_cube;
    MigrationMode mode;
    uint64_t start_cycle;
    uint64_t end_cycle;
    bool aborted;
    uint64_t latency;  // end - start for completed migrations
    int provider_mc;
};

struct TranslateResult {
    enum class Status : uint8_t { OK, DEFERRED, FAULT } status = Status::OK;
    uint64_t paddr = 0;
    bool first_touch = false;
};

struct FrameAccounting {
    uint64_t free = 0;
    uint64_t mapped = 0;
    uint64_t inflight_new = 0;  // dst frames claimed by active migrations
    uint64_t draining = 0;      // old frames waiting for outstanding reads
    uint64_t total = 0;
};

struct PagingConfig {
    AllocPolicy policy = AllocPolicy::DEFAULT;
    uint32_t migration_queue_capacity = 128;
    int dma_channels = 1;
    int os_interrupt_cycles = 50;
    uint64_t hoard_chunk_frames = 64;
    int dma_packets_per_cycle = 1;
    int migration_payload_bits = 512;
};

// Virtual-to-physical mapping, per-cube frame pools with three allocation
// policies, and the migration management system (blocking for read-write
// pages, non-blocking for read-only ones). The owner injects the migration
// packets this module asks for and feeds deliveries back in.
class PagingSystem {
  public:
    PagingSystem(const PagingConfig& cfg, const memnet::DramMapper& mapper);

    void declare_process(uint32_t pid, uint64_t virtual_extent);
    void set_readonly(uint32_t pid, uint64_t lo, uint64_t hi);

    // First touch allocates. Blocking-locked pages defer: the waiter token is
    // recorded and handed back by finish_migration when the page unlocks.
    TranslateResult translate(uint32_t pid, uint64_t vaddr, uint64_t waiter_token);
    // Translation for probes that must never allocate or defer.
    std::optional<uint64_t> peek_frame(PageKey key) const;
    int cube_of_page(PageKey key) const;  // -1 when unmapped
    bool is_mapped(PageKey key) const { return pages_.count(key) != 0; }
    Permission permission_of(PageKey key) const;

    // Explicit allocation (used by translate; exposed for tests).
    uint64_t allocate_frame(PageKey key, std::optional<int> preferred_cube);

    MigrationOutcome request_migration(PageKey page, int dst_cube, uint64_t cycle, int provider_mc);

    // One step of the migration DMA engine. `inject` attempts a network
    // injection and returns false on backpressure (the packet is retried).
    struct DmaStep {
        std::vector<uint64_t> released_waiters;
        std::vector<MigrationEvent> completed;  // includes aborts
    };
    DmaStep step_dma(uint64_t cycle, const std::function<bool(memnet::Packet&)>& inject);

    // Network feedback. Returns the destination cube when the last data
    // packet of a migration lands (the caller then sends the MIGRATION_ACK).
    std::optional<int> on_migration_data_delivered(uint64_t migration_id);
    // Ack delivery: starts the OS page-table-update interrupt countdown.
    void on_migration_ack(uint64_t migration_id, uint64_t cycle);

    // Outstanding-read tracking: a non-blocking migration's old frame is not
    // returned to the pool until reads that started against it have drained.
    void note_frame_read_started(uint64_t frame);
    void note_frame_read_done(uint64_t frame);

    FrameAccounting frame_accounting() const;
    uint64_t mapped_pages() const { return pages_.size(); }
    bool migration_in_flight() const { return !queue_.empty() || !active_.empty() || !finalizing_.empty(); }
    size_t migration_queue_occupancy() const { return queue_.size(); }

    uint64_t migrations_completed = 0;
    uint64_t migrations_aborted = 0;
    uint64_t drops_full = 0;
    uint64_t drops_inflight = 0;
    uint64_t drops_noop = 0;
    uint64_t migration_queue_accesses = 0;  // enqueue + dequeue
    uint64_t mdma_buffer_accesses = 0;      // per migration packet staged
    uint64_t pages_ever_migrated() const { return migrated_pages_.size(); }
    bool was_migrated(PageKey key) const { return migrated_pages_.count(key) != 0; }

    const memnet::DramMapper& mapper() const { return mapper_; }
    // Rebucket free frames after a DRAM mapping variant change.
    void rebuild_free_pools();

  private:
    struct PageEntry {
        uint64_t frame = 0;
        Permission perm = Permission::READ_WRITE;
        bool locked = false;
        std::optional<uint64_t> active_migration;
    };
    struct ActiveMigration {
        MigrationRequest req;
        uint64_t new_frame = 0;
        uint64_t old_frame = 0;
        int packets_total = 0;
        int packets_sent = 0;
        int packets_delivered = 0;
        uint64_t ack_cycle = 0;
        bool ack_seen = false;
    };
    struct ProcessInfo {
        uint64_t extent = 0;
        int rr_cursor = 0;  // DEFAULT policy striping
        std::vector<std::pair<uint64_t, uint64_t>> readonly;  // [lo, hi)
        std::optional<uint64_t> hoard_chunk_base;
        uint64_t hoard_chunk_used = 0;
    };

    uint64_t take_frame_in_cube(int cube);
    std::optional<uint64_t> try_take_frame_in_cube(int cube);
    uint64_t allocate_default(ProcessInfo& proc);
    uint64_t allocate_hoard(uint32_t pid, ProcessInfo& proc);
    uint64_t allocate_hotspot();
    void release_frame(uint64_t frame);
    void finalize_migration(ActiveMigration& am, uint64_t cycle, DmaStep& out);

    PagingConfig cfg_;
    const memnet::DramMapper& mapper_;
    std::map<PageKey, PageEntry> pages_;
    std::map<uint32_t, ProcessInfo> procs_;
    std::vector<std::set<uint64_t>> free_by_cube_;
    uint64_t free_total_ = 0;
    std::deque<MigrationRequest> queue_;
    std::map<uint64_t, ActiveMigration> active_;      // dma started, keyed by id
    std::map<uint64_t, ActiveMigration> finalizing_;  // ack seen, interrupt pending
    std::map<PageKey, std::vector<uint64_t>> waiters_;
    std::map<uint64_t, uint64_t> old_frame_reads_;    // frame -> outstanding
    std::set<uint64_t> draining_frames_;
    std::set<PageKey> inflight_pages_;
    std::set<PageKey> migrated_pages_;
    uint64_t next_migration_id_ = 0;
};

}  // namespace nmpsim::paging
