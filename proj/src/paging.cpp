#include "nmpsim/paging.hpp"

#include <algorithm>

namespace nmpsim::paging {

PagingSystem::PagingSystem(const PagingConfig& cfg, const memnet::DramMapper& mapper)
    : cfg_(cfg), mapper_(mapper) {
    if (cfg.dma_channels < 1) throw ConfigError("dma_channels must be positive");
    if (cfg.hoard_chunk_frames < 1) throw ConfigError("hoard_chunk_frames must be positive");
    free_by_cube_.resize(size_t(mapper_.total_frames() / mapper_.frames_per_cube()));
    for (uint64_t f = 0; f < mapper_.total_frames(); ++f)
        free_by_cube_[size_t(mapper_.cube_of_frame(f))].insert(f);
    free_total_ = mapper_.total_frames();
}

void PagingSystem::declare_process(uint32_t pid, uint64_t virtual_extent) {
    procs_[pid].extent = virtual_extent;
}

void PagingSystem::set_readonly(uint32_t pid, uint64_t lo, uint64_t hi) {
    procs_[pid].readonly.push_back({lo, hi});
}

void PagingSystem::rebuild_free_pools() {
    std::vector<uint64_t> free;
    for (auto& s : free_by_cube_)
        for (uint64_t f : s) free.push_back(f);
    for (auto& s : free_by_cube_) s.clear();
    for (uint64_t f : free) free_by_cube_[size_t(mapper_.cube_of_frame(f))].insert(f);
}

std::optional<uint64_t> PagingSystem::try_take_frame_in_cube(int cube) {
    auto& pool = free_by_cube_[size_t(cube)];
    if (pool.empty()) return std::nullopt;
    uint64_t f = *pool.begin();
    pool.erase(pool.begin());
    --free_total_;
    return f;
}

void PagingSystem::release_frame(uint64_t frame) {
    free_by_cube_[size_t(mapper_.cube_of_frame(frame))].insert(frame);
    ++free_total_;
}

uint64_t PagingSystem::allocate_default(ProcessInfo& proc) {
    int cubes = int(free_by_cube_.size());
    for (int i = 0; i < cubes; ++i) {
        int cube = (proc.rr_cursor + i) % cubes;
        if (auto f = try_take_frame_in_cube(cube)) {
            proc.rr_cursor = (cube + 1) % cubes;
            return *f;
        }
    }
    throw OutOfMemory("no free frame in any cube");
}

uint64_t PagingSystem::allocate_hoard(uint32_t pid, ProcessInfo& proc) {
    int cubes = int(free_by_cube_.size());
    // serve from the current chunk, skipping frames stolen by migrations
    if (proc.hoard_chunk_base) {
        while (proc.hoard_chunk_used < cfg_.hoard_chunk_frames) {
            uint64_t f = *proc.hoard_chunk_base + proc.hoard_chunk_used++;
            int cube = mapper_.cube_of_frame(f);
            auto& pool = free_by_cube_[size_t(cube)];
            auto it = pool.find(f);
            if (it != pool.end()) {
                pool.erase(it);
                --free_total_;
                return f;
            }
        }
        proc.hoard_chunk_base.reset();
    }
    // claim a fresh chunk near the process home cube; chunks are aligned runs
    // of consecutive frames so a whole chunk lives in one cube
    int home = int(pid) % cubes;
    for (int i = 0; i < cubes; ++i) {
        int cube = (home + i) % cubes;
        const auto& pool = free_by_cube_[size_t(cube)];
        for (uint64_t base : pool) {
            if (base % cfg_.hoard_chunk_frames != 0) continue;
            bool run = true;
            for (uint64_t k = 0; k < cfg_.hoard_chunk_frames && run; ++k)
                run = pool.count(base + k) != 0 && mapper_.cube_of_frame(base + k) == cube;
            if (run) {
                proc.hoard_chunk_base = base;
                proc.hoard_chunk_used = 0;
                return allocate_hoard(pid, proc);
            }
        }
    }
    // fragmented pool: fall back to round-robin striping
    return allocate_default(proc);
}

uint64_t PagingSystem::allocate_hotspot() {
    int cubes = int(free_by_cube_.size());
    for (int cube = 0; cube < cubes; ++cube)
        if (auto f = try_take_frame_in_cube(cube)) return *f;
    throw OutOfMemory("no free frame in any cube");
}

uint64_t PagingSystem::allocate_frame(PageKey key, std::optional<int> preferred_cube) {
    auto pit = procs_.find(key.pid);
    if (pit == procs_.end()) throw SegFault("allocation for undeclared process");
    if (preferred_cube) {
        if (auto f = try_take_frame_in_cube(*preferred_cube)) return *f;
    }
    switch (cfg_.policy) {
        case AllocPolicy::DEFAULT: return allocate_default(pit->second);
        case AllocPolicy::HOARD: return allocate_hoard(key.pid, pit->second);
        case AllocPolicy::HOTSPOT: return allocate_hotspot();
    }
    throw ConfigError("unknown allocation policy");
}

TranslateResult PagingSystem::translate(uint32_t pid, uint64_t vaddr, uint64_t waiter_token) {
    auto pit = procs_.find(pid);
    if (pit == procs_.end() || vaddr >= pit->second.extent)
        throw SegFault("virtual address outside process extent");
    uint64_t page_size = mapper_.page_size();
    PageKey key{pid, vaddr / page_size};
    auto it = pages_.find(key);
    TranslateResult res;
    if (it == pages_.end()) {
        PageEntry e;
        e.frame = allocate_frame(key, std::nullopt);
        uint64_t lo = key.vpage * page_size;
        uint64_t hi = lo + page_size;
        e.perm = Permission::READ_WRITE;
        for (const auto& [rlo, rhi] : pit->second.readonly)
            if (rlo <= lo && hi <= rhi) e.perm = Permission::READ_ONLY;
        it = pages_.emplace(key, e).first;
        res.first_touch = true;
    }
    if (it->second.locked) {
        waiters_[key].push_back(waiter_token);
        res.status = TranslateResult::Status::DEFERRED;
        return res;
    }
    res.status = TranslateResult::Status::OK;
    res.paddr = it->second.frame * page_size + vaddr % page_size;
    return res;
}

std::optional<uint64_t> PagingSystem::peek_frame(PageKey key) const {
    auto it = pages_.find(key);
    if (it == pages_.end()) return std::nullopt;
    return it->second.frame;
}

int PagingSystem::cube_of_page(PageKey key) const {
    auto it = pages_.find(key);
    if (it == pages_.end()) return -1;
    return mapper_.cube_of_frame(it->second.frame);
}

Permission PagingSystem::permission_of(PageKey key) const {
    auto it = pages_.find(key);
    if (it == pages_.end()) throw InvalidPage("permission query for unmapped page");
    return it->second.perm;
}

MigrationOutcome PagingSystem::request_migration(PageKey page, int dst_cube, uint64_t cycle, int provider_mc) {
    auto it = pages_.find(page);
    if (it == pages_.end()) throw InvalidPage("migration request for unmapped page");
    if (dst_cube < 0 || dst_cube >= int(free_by_cube_.size()))
        throw InvalidAddress("migration destination outside mesh");
    if (mapper_.cube_of_frame(it->second.frame) == dst_cube) {
        ++drops_noop;
        return MigrationOutcome::DROPPED_NOOP;
    }
    if (inflight_pages_.count(page)) {
        ++drops_inflight;
        return MigrationOutcome::DROPPED_INFLIGHT;
    }
    if (queue_.size() >= cfg_.migration_queue_capacity) {
        ++drops_full;
        return MigrationOutcome::DROPPED_FULL;
    }
    MigrationRequest req;
    req.id = next_migration_id_++;
    req.page = page;
    req.src_cube = mapper_.cube_of_frame(it->second.frame);
    req.dst_cube = dst_cube;
    req.mode = it->second.perm == Permission::READ_WRITE ? MigrationMode::BLOCKING : MigrationMode::NON_BLOCKING;
    req.state = MigrationState::QUEUED;
    req.start_cycle = cycle;
    req.provider_mc = provider_mc;
    queue_.push_back(req);
    inflight_pages_.insert(page);
    ++migration_queue_accesses;
    return MigrationOutcome::QUEUED;
}

PagingSystem::DmaStep PagingSystem::step_dma(uint64_t cycle,
                                             const std::function<bool(memnet::Packet&)>& inject) {
    DmaStep out;

    // retire migrations whose OS page-table-update interrupt has elapsed
    for (auto it = finalizing_.begin(); it != finalizing_.end();) {
        if (it->second.ack_cycle + uint64_t(cfg_.os_interrupt_cycles) <= cycle) {
            finalize_migration(it->second, cycle, out);
            it = finalizing_.erase(it);
        } else {
            ++it;
        }
    }

    // admit queued requests while DMA channels are free
    while (int(active_.size()) < cfg_.dma_channels && !queue_.empty()) {
        MigrationRequest req = queue_.front();
        queue_.pop_front();
        ++migration_queue_accesses;
        auto pit = pages_.find(req.page);
        if (pit == pages_.end()) {
            inflight_pages_.erase(req.page);
            continue;
        }
        auto new_frame = try_take_frame_in_cube(req.dst_cube);
        if (!new_frame) {
            ++migrations_aborted;
            inflight_pages_.erase(req.page);
            out.completed.push_back({req.page, req.src_cube, req.dst_cube, req.mode, cycle, cycle, true, 0,
                                     req.provider_mc});
            continue;
        }
        ActiveMigration am;
        am.req = req;
        am.req.state = MigrationState::DMA_ACTIVE;
        am.req.start_cycle = cycle;
        am.new_frame = *new_frame;
        am.old_frame = pit->second.frame;
        am.packets_total = int(mapper_.page_size() * 8 / uint64_t(cfg_.migration_payload_bits));
        pit->second.active_migration = am.req.id;
        if (req.mode == MigrationMode::BLOCKING) pit->second.locked = true;
        active_.emplace(am.req.id, am);
    }

    // pump migration data into the network, one channel per active migration
    for (auto& [id, am] : active_) {
        if (am.req.state != MigrationState::DMA_ACTIVE) continue;
        for (int i = 0; i < cfg_.dma_packets_per_cycle && am.packets_sent < am.packets_total; ++i) {
            memnet::Packet pkt;
            pkt.kind = memnet::PacketKind::MIGRATION_DATA;
            pkt.src_cube = am.req.src_cube;
            pkt.dst_cube = am.req.dst_cube;
            pkt.payload_bits = cfg_.migration_payload_bits;
            pkt.op_ref = int64_t(id);
            pkt.aux = am.packets_sent;
            if (!inject(pkt)) break;
            ++am.packets_sent;
            ++mdma_buffer_accesses;
        }
        if (am.packets_sent == am.packets_total) am.req.state = MigrationState::AWAITING_ACK;
    }
    return out;
}

std::optional<int> PagingSystem::on_migration_data_delivered(uint64_t migration_id) {
    auto it = active_.find(migration_id);
    if (it == active_.end()) return std::nullopt;
    ++it->second.packets_delivered;
    ++mdma_buffer_accesses;
    if (it->second.packets_delivered == it->second.packets_total) return it->second.req.dst_cube;
    return std::nullopt;
}

void PagingSystem::on_migration_ack(uint64_t migration_id, uint64_t cycle) {
    auto it = active_.find(migration_id);
    if (it == active_.end()) return;
    it->second.ack_seen = true;
    it->second.ack_cycle = cycle;
    it->second.req.end_cycle = cycle;
    finalizing_.emplace(migration_id, it->second);
    active_.erase(it);
}

void PagingSystem::finalize_migration(ActiveMigration& am, uint64_t cycle, DmaStep& out) {
    (void)cycle;
    auto pit = pages_.find(am.req.page);
    if (pit == pages_.end()) return;
    pit->second.frame = am.new_frame;
    pit->second.locked = false;
    pit->second.active_migration.reset();
    auto wit = waiters_.find(am.req.page);
    if (wit != waiters_.end()) {
        for (uint64_t w : wit->second) out.released_waiters.push_back(w);
        waiters_.erase(wit);
    }
    if (am.req.mode == MigrationMode::NON_BLOCKING) {
        auto rit = old_frame_reads_.find(am.old_frame);
        if (rit != old_frame_reads_.end() && rit->second > 0) {
            draining_frames_.insert(am.old_frame);
        } else {
            release_frame(am.old_frame);
        }
    } else {
        release_frame(am.old_frame);
    }
    migrated_pages_.insert(am.req.page);
    inflight_pages_.erase(am.req.page);
    ++migrations_completed;
    am.req.state = MigrationState::COMPLETE;
    out.completed.push_back({am.req.page, am.req.src_cube, am.req.dst_cube, am.req.mode, am.req.start_cycle,
                             am.req.end_cycle, false, am.req.end_cycle - am.req.start_cycle,
                             am.req.provider_mc});
}

void PagingSystem::note_frame_read_started(uint64_t frame) { old_frame_reads_[frame]++; }

void PagingSystem::note_frame_read_done(uint64_t frame) {
    auto it = old_frame_reads_.find(frame);
    if (it == old_frame_reads_.end()) return;
    if (it->second > 0) --it->second;
    if (it->second == 0) {
        old_frame_reads_.erase(it);
        if (draining_frames_.count(frame)) {
            draining_frames_.erase(frame);
            release_frame(frame);
        }
    }
}

FrameAccounting PagingSystem::frame_accounting() const {
    FrameAccounting fa;
    fa.free = free_total_;
    fa.mapped = pages_.size();
    fa.inflight_new = active_.size() + finalizing_.size();
    fa.draining = draining_frames_.size();
    fa.total = mapper_.total_frames();
    return fa;
}

}  // namespace nmpsim::paging
