#include "nmpsim/sim.hpp"

#include <algorithm>
#include <cmath>

namespace nmpsim::harness {

using memnet::Packet;
using memnet::PacketKind;
using memnet::PayloadTag;
using offload::Technique;
using paging::PageKey;

namespace {
constexpr int kControlBits = 128;
constexpr int kOperandBits = 512;
constexpr int kRespBits = kControlBits + kOperandBits;  // header + one operand
}  // namespace

Simulator::Simulator(const SimConfig& cfg, uint64_t seed_override) : cfg_(cfg) {
    cfg_.validate();
    if (seed_override) cfg_.sim.seed = seed_override;
    master_seed_ = cfg_.sim.seed;
    build_stream();

    layout_.cubes = cfg_.mesh.cubes();
    layout_.mcs = mc_count_;
    layout_.history = int(cfg_.offload.history_len);
    mc_corners_ = offload::mc_corner_cubes(cfg_.mesh);
    max_hop_ = cfg_.mesh.width - 1 + cfg_.mesh.height - 1;

    if (cfg_.offload.remapper == Remapper::AIMM) {
        agent::AgentConfig acfg = cfg_.agent;
        acfg.seed = mix_seed(master_seed_, 0xa9);
        agent_ = std::make_unique<agent::Agent>(acfg, layout_);
        if (!cfg_.checkpoint_in.empty()) {
            auto net = agent::QNetwork::load(cfg_.checkpoint_in);
            if (net.input_dim() != layout_.length())
                throw ConfigError("checkpoint input dim does not match state layout");
            agent_->net() = std::move(net);
        }
    }
    action_rng_.seed(mix_seed(master_seed_, 0x77ac));
}

void Simulator::build_stream() {
    std::vector<trace::OpTrace> traces;
    uint32_t next_pid = 0;
    for (size_t i = 0; i < cfg_.traces.size(); ++i) {
        const TraceSpec& spec = cfg_.traces[i];
        trace::OpTrace t = spec.file.empty()
                               ? trace::generate_kernel_trace(*spec.generate, spec.n,
                                                              spec.seed ? *spec.seed : cfg_.sim.seed + i)
                               : trace::load_trace_file(spec.file);
        if (t.page_size_bytes != cfg_.paging.page_size)
            throw ConfigError("trace page size differs from paging.page_size");
        // re-stamp process ids so concurrent traces stay distinct
        std::map<uint32_t, uint32_t> remap_pid;
        for (const auto& p : t.processes) {
            remap_pid[p.id] = next_pid;
            processes_.push_back({next_pid, p.virtual_extent});
            ++next_pid;
        }
        for (auto& r : t.readonly_regions)
            readonly_.push_back({remap_pid.at(r.process_id), r.lo, r.hi});
        for (auto& op : t.ops) op.process_id = remap_pid.at(op.process_id);
        traces.push_back(std::move(t));
    }
    if (processes_.size() > 4 && !cfg_.sim.allow_many_processes)
        throw ConfigError("more than 4 concurrent processes (set sim.allow_many_processes to lift)");

    // round-robin interleave across traces by issue slot
    std::vector<size_t> pos(traces.size(), 0);
    size_t remaining = 0;
    for (const auto& t : traces) remaining += t.ops.size();
    stream_.reserve(remaining);
    size_t idx = 0;
    while (remaining > 0) {
        size_t ti = idx % traces.size();
        ++idx;
        if (pos[ti] < traces[ti].ops.size()) {
            stream_.push_back(traces[ti].ops[pos[ti]++]);
            --remaining;
        }
    }
}

void Simulator::reset_repeat() {
    mapper_ = std::make_unique<memnet::DramMapper>(cfg_.mesh, cfg_.cube.geometry, cfg_.cube.capacity_bytes,
                                                   cfg_.paging.page_size);
    net_ = std::make_unique<memnet::Network>(cfg_.mesh);
    cubes_.clear();
    for (int c = 0; c < cfg_.mesh.cubes(); ++c)
        cubes_.emplace_back(c, cfg_.cube.geometry, cfg_.cube.timing, cfg_.cube.nmp_table_entries);

    paging::PagingConfig pcfg;
    pcfg.policy = cfg_.paging.policy;
    pcfg.migration_queue_capacity = cfg_.paging.migration_queue;
    pcfg.dma_channels = cfg_.paging.dma_channels;
    pcfg.os_interrupt_cycles = cfg_.paging.os_interrupt_cycles;
    pcfg.hoard_chunk_frames = cfg_.paging.hoard_chunk_frames;
    paging_ = std::make_unique<paging::PagingSystem>(pcfg, *mapper_);
    for (const auto& p : processes_) paging_->declare_process(p.id, p.virtual_extent);
    for (const auto& r : readonly_) paging_->set_readonly(r.process_id, r.lo, r.hi);

    page_info_.clear();
    for (int m = 0; m < mc_count_; ++m)
        page_info_.emplace_back(cfg_.offload.page_info_entries, cfg_.offload.history_len);
    counters_ = std::make_unique<offload::SystemCounters>(cfg_.mesh.cubes(), mc_count_);
    remap_ = std::make_unique<offload::ComputeRemapTable>(cfg_.offload.remap_entries);
    host_caches_.clear();
    for (int c = 0; c < cfg_.sim.cores; ++c)
        host_caches_.emplace_back(cfg_.sim.cache_bytes, cfg_.sim.cache_line, cfg_.sim.cache_ways,
                                  cfg_.sim.mshr);

    ops_.assign(stream_.size(), OpRec{});
    for (size_t i = 0; i < stream_.size(); ++i) {
        ops_[i].op = stream_[i];
        ops_[i].has_src2 = stream_[i].src2_vaddr.has_value();
    }
    mc_queue_.assign(size_t(mc_count_), {});
    dram_q_.assign(size_t(cfg_.mesh.cubes()), std::vector<std::deque<DramReq>>(size_t(cfg_.cube.geometry.vaults)));
    dram_pending_.assign(size_t(cfg_.mesh.cubes()), 0);
    bank_busy_until_.assign(size_t(cfg_.mesh.cubes()),
                            std::vector<uint64_t>(size_t(cfg_.cube.geometry.vaults) *
                                                      size_t(cfg_.cube.geometry.banks_per_vault),
                                                  0));
    compute_ready_.assign(size_t(cfg_.mesh.cubes()), {});
    events_at_.clear();
    pending_inject_.assign(size_t(cfg_.mesh.cubes()),
                           std::vector<std::deque<Packet>>(size_t(cfg_.mesh.vc_count)));
    per_cube_completions_.assign(size_t(cfg_.mesh.cubes()), 0);
    tom_window_.clear();

    cycle_ = 0;
    next_op_ = 0;
    completed_ = 0;
    migration_data_delivered_ = 0;
    current_interval_ = cfg_.agent.initial_interval;
    interval_start_ = 0;
    interval_ops_ = 0;
    tick_ops_ = 0;
    tick_start_ = 0;
    tick_mig_base_ = 0;
    next_tom_epoch_ = cfg_.offload.tom_epoch_cycles;
    memory_bits_ = 0;
    nmp_table_accesses_ = 0;
    page_accesses_total_ = 0;
    page_accesses_migrated_ = 0;
    prev_op_hops_ = prev_row_hits_ = prev_row_accesses_ = 0;
    interval_cube_base_.assign(size_t(cfg_.mesh.cubes()), 0);
    if (agent_) {
        agent_weight_base_ = agent_->net().weight_accesses;
        agent_replay_base_ = agent_->replay().accesses;
        agent_state_base_ = agent_->state_buffer_accesses;
    }
}

PageKey Simulator::key_of(const trace::NmpOp& op, int slot) const {
    uint64_t v = slot == 0 ? op.dest_vaddr : slot == 1 ? op.src1_vaddr : *op.src2_vaddr;
    return {op.process_id, v / cfg_.paging.page_size};
}

Packet Simulator::make_packet(PacketKind kind, PayloadTag tag, int src, int dst, int bits, int64_t op_ref,
                              int aux) {
    Packet p;
    p.id = packet_ids_++;
    p.kind = kind;
    p.tag = tag;
    p.src_cube = src;
    p.dst_cube = dst;
    p.payload_bits = bits;
    p.op_ref = op_ref;
    p.aux = aux;
    return p;
}

void Simulator::queue_packet(Packet p) {
    int vc = memnet::vc_for_kind(p.kind, cfg_.mesh.vc_count);
    pending_inject_[size_t(p.src_cube)][size_t(vc)].push_back(p);
}

void Simulator::drain_injections() {
    for (auto& per_cube : pending_inject_) {
        for (auto& q : per_cube) {
            while (!q.empty() && net_->try_inject(q.front(), cycle_)) q.pop_front();
        }
    }
}

void Simulator::schedule_event(uint64_t cycle, Event ev) { events_at_[cycle].push_back(std::move(ev)); }

void Simulator::enqueue_dram(int cube, const DramReq& req) {
    dram_q_[size_t(cube)][size_t(req.vault)].push_back(req);
    ++dram_pending_[size_t(cube)];
}

void Simulator::dram_step() {
    int banks = cfg_.cube.geometry.banks_per_vault;
    for (int c = 0; c < cfg_.mesh.cubes(); ++c) {
        if (dram_pending_[size_t(c)] == 0) continue;
        for (int v = 0; v < cfg_.cube.geometry.vaults; ++v) {
            auto& q = dram_q_[size_t(c)][size_t(v)];
            if (q.empty()) continue;
            DramReq req = q.front();
            uint64_t& busy = bank_busy_until_[size_t(c)][size_t(v * banks + req.bank)];
            if (busy > cycle_) continue;
            auto res = cubes_[size_t(c)].access(req.vault, req.bank, req.row);
            busy = cycle_ + uint64_t(res.latency);
            memory_bits_ += kOperandBits;
            q.pop_front();
            --dram_pending_[size_t(c)];
            Event ev;
            ev.type = Event::Type::DRAM_DONE;
            ev.cube = c;
            ev.req = req;
            ev.op_idx = req.op_idx;
            schedule_event(cycle_ + uint64_t(res.latency), std::move(ev));
        }
    }
}

void Simulator::dispatch_stream() {
    for (int budget = cfg_.sim.issue_width; budget > 0 && next_op_ < stream_.size(); --budget) {
        int mc = int(next_op_ % uint64_t(mc_count_));
        if (mc_queue_[size_t(mc)].size() >= cfg_.offload.mc_queue) break;
        OpRec& rec = ops_[next_op_];
        rec.mc = mc;
        rec.core = int(next_op_ % uint64_t(cfg_.sim.cores));
        rec.stage = Stage::MC_QUEUED;
        mc_queue_[size_t(mc)].push_back(next_op_);
        ++next_op_;
    }
}

void Simulator::touch_issue_page_info(OpRec& rec) {
    auto& cache = page_info_[size_t(rec.mc)];
    int slots = rec.has_src2 ? 3 : 2;
    for (int s = 0; s < slots; ++s) {
        PageKey key = key_of(rec.op, s);
        auto& entry = cache.touch(key);
        entry.access_count++;
        cache.total_page_accesses++;
        int hops = memnet::manhattan(memnet::coord_of(rec.cube[size_t(s)], cfg_.mesh),
                                     memnet::coord_of(rec.compute_cube, cfg_.mesh));
        entry.hop_history.push(double(hops));
        entry.last_compute_cube = rec.compute_cube;
        entry.last_src1_cube = rec.cube[1];
        ++page_accesses_total_;
        if (paging_->was_migrated(key)) ++page_accesses_migrated_;
    }
}

bool Simulator::try_issue(uint64_t op_idx) {
    OpRec& rec = ops_[op_idx];
    const trace::NmpOp& op = rec.op;
    int slots = rec.has_src2 ? 3 : 2;
    for (int s = 0; s < slots; ++s) {
        uint64_t vaddr = s == 0 ? op.dest_vaddr : s == 1 ? op.src1_vaddr : *op.src2_vaddr;
        auto tr = paging_->translate(op.process_id, vaddr, op_idx);
        if (tr.status == paging::TranslateResult::Status::DEFERRED) {
            rec.stage = Stage::WAIT_UNLOCK;
            return true;  // parked with the paging system until unlock
        }
        rec.paddr[size_t(s)] = tr.paddr;
        rec.cube[size_t(s)] = mapper_->cube_of_frame(tr.paddr / cfg_.paging.page_size);
    }

    // a compute-remap entry overrides every technique default, including
    // PEI's host path: the op is offloaded to the suggested cube
    bool remapped = remap_->lookup(key_of(op, 0)).has_value() ||
                    remap_->lookup(key_of(op, 1)).has_value() ||
                    (rec.has_src2 && remap_->lookup(key_of(op, 2)).has_value());
    if (cfg_.offload.technique == Technique::PEI && !remapped) {
        auto& cache = host_caches_[size_t(rec.core)];
        std::vector<uint64_t> paddrs(rec.paddr.begin(), rec.paddr.begin() + slots);
        auto decision = offload::pei_host_filter(cache, paddrs);
        if (decision.host_execute) {
            if (cache.mshr_free() < int(decision.miss_slots.size())) return false;  // MSHR backpressure
            for (size_t i = 0; i < decision.miss_slots.size(); ++i) cache.mshr_acquire();
            rec.host = true;
            rec.compute_cube = mc_corners_[size_t(rec.mc)];
            rec.pending = int(decision.miss_slots.size());
            rec.issue_cycle = cycle_;
            rec.stage = Stage::HOST_WAIT;
            touch_issue_page_info(rec);
            for (int s : decision.miss_slots) {
                paging_->note_frame_read_started(rec.paddr[size_t(s)] / cfg_.paging.page_size);
                queue_packet(make_packet(PacketKind::DATA_REQ, PayloadTag::CONTROL, rec.compute_cube,
                                         rec.cube[size_t(s)], kControlBits, int64_t(op_idx), s));
            }
            if (rec.pending == 0) {
                Event ev;
                ev.type = Event::Type::HOST_COMPUTE_DONE;
                ev.op_idx = op_idx;
                schedule_event(cycle_ + 1, std::move(ev));
            }
            return true;
        }
    }

    offload::OperandPlacement dest{key_of(op, 0), rec.cube[0], rec.paddr[0]};
    offload::OperandPlacement src1{key_of(op, 1), rec.cube[1], rec.paddr[1]};
    std::optional<offload::OperandPlacement> src2;
    if (rec.has_src2) src2 = offload::OperandPlacement{key_of(op, 2), rec.cube[2], rec.paddr[2]};
    auto plan = offload::schedule_op(cfg_.offload.technique, *remap_, dest, src1, src2);

    if (!cubes_[size_t(plan.compute_cube)].nmp_insert()) return false;  // table full: stall at MC
    ++nmp_table_accesses_;
    rec.compute_cube = plan.compute_cube;
    rec.forward_result = plan.forward_result;
    rec.pending = rec.has_src2 ? 2 : 1;
    rec.issue_cycle = cycle_;
    rec.stage = Stage::ISSUED;
    touch_issue_page_info(rec);
    for (int s = 1; s < slots; ++s)
        paging_->note_frame_read_started(rec.paddr[size_t(s)] / cfg_.paging.page_size);
    queue_packet(make_packet(PacketKind::NMP_REQ, PayloadTag::CONTROL, mc_corners_[size_t(rec.mc)],
                             rec.compute_cube, kControlBits, int64_t(op_idx)));
    if (cfg_.offload.remapper == Remapper::TOM) {
        offload::WindowOp w;
        w.dest_frame = rec.paddr[0] / cfg_.paging.page_size;
        w.src1_frame = rec.paddr[1] / cfg_.paging.page_size;
        if (rec.has_src2) w.src2_frame = rec.paddr[2] / cfg_.paging.page_size;
        tom_window_.push_back(w);
    }
    return true;
}

void Simulator::mc_issue() {
    for (int m = 0; m < mc_count_; ++m) {
        auto& q = mc_queue_[size_t(m)];
        if (q.empty()) continue;
        if (try_issue(q.front())) q.pop_front();
    }
}

void Simulator::operand_ready(uint64_t op_idx) {
    OpRec& rec = ops_[op_idx];
    ++nmp_table_accesses_;  // operand lands in the table entry
    if (--rec.pending == 0) compute_ready_[size_t(rec.compute_cube)].push_back(op_idx);
}

void Simulator::compute_stage() {
    for (int c = 0; c < cfg_.mesh.cubes(); ++c) {
        auto& q = compute_ready_[size_t(c)];
        for (int w = 0; w < cfg_.cube.compute_width && !q.empty(); ++w) {
            Event ev;
            ev.type = Event::Type::COMPUTE_DONE;
            ev.op_idx = q.front();
            q.pop_front();
            schedule_event(cycle_ + 1, std::move(ev));
        }
    }
}

void Simulator::finish_compute(uint64_t op_idx) {
    OpRec& rec = ops_[op_idx];
    cubes_[size_t(rec.compute_cube)].nmp_retire();
    ++nmp_table_accesses_;
    queue_packet(make_packet(PacketKind::ACK, PayloadTag::CONTROL, rec.compute_cube,
                             mc_corners_[size_t(rec.mc)], kControlBits, int64_t(op_idx)));
    if (rec.forward_result) {
        queue_packet(make_packet(PacketKind::DATA_RESP, PayloadTag::RESULT, rec.compute_cube, rec.cube[0],
                                 kRespBits, int64_t(op_idx)));
    } else {
        auto loc = mapper_->map(rec.paddr[0]);
        enqueue_dram(rec.cube[0], DramReq{loc.vault, loc.bank, loc.row, DramReq::Done::WRITE, op_idx, 0,
                                          rec.paddr[0] / cfg_.paging.page_size, -1});
    }
}

void Simulator::complete_at_mc(uint64_t op_idx) {
    OpRec& rec = ops_[op_idx];
    rec.stage = Stage::DONE;
    ++completed_;
    ++interval_ops_;
    ++tick_ops_;
    per_cube_completions_[size_t(rec.compute_cube)]++;
    uint64_t latency = cycle_ - rec.issue_cycle;
    auto& cache = page_info_[size_t(rec.mc)];
    int slots = rec.has_src2 ? 3 : 2;
    for (int s = 0; s < slots; ++s) {
        if (auto* entry = cache.find(key_of(rec.op, s))) entry->latency_history.push(double(latency));
    }
    if (cfg_.offload.technique == Technique::PEI)
        host_caches_[size_t(rec.core)].install(rec.paddr[0]);  // response data reaches the CPU
}

void Simulator::handle_delivery(const memnet::DeliveredPacket& d) {
    const Packet& p = d.packet;
    switch (p.kind) {
        case PacketKind::NMP_REQ: {
            OpRec& rec = ops_[size_t(p.op_ref)];
            int slots = rec.has_src2 ? 3 : 2;
            for (int s = 1; s < slots; ++s) {
                if (rec.cube[size_t(s)] == rec.compute_cube) {
                    auto loc = mapper_->map(rec.paddr[size_t(s)]);
                    enqueue_dram(rec.compute_cube,
                                 DramReq{loc.vault, loc.bank, loc.row, DramReq::Done::OPERAND_LOCAL,
                                         uint64_t(p.op_ref), s, rec.paddr[size_t(s)] / cfg_.paging.page_size,
                                         -1});
                } else {
                    queue_packet(make_packet(PacketKind::DATA_REQ, PayloadTag::CONTROL, rec.compute_cube,
                                             rec.cube[size_t(s)], kControlBits, p.op_ref, s));
                }
            }
            break;
        }
        case PacketKind::DATA_REQ: {
            OpRec& rec = ops_[size_t(p.op_ref)];
            int s = p.aux;
            auto loc = mapper_->map(rec.paddr[size_t(s)]);
            enqueue_dram(p.dst_cube, DramReq{loc.vault, loc.bank, loc.row, DramReq::Done::OPERAND_REMOTE,
                                             uint64_t(p.op_ref), s,
                                             rec.paddr[size_t(s)] / cfg_.paging.page_size, p.src_cube});
            break;
        }
        case PacketKind::DATA_RESP: {
            OpRec& rec = ops_[size_t(p.op_ref)];
            if (p.tag == PayloadTag::RESULT) {
                auto loc = mapper_->map(rec.paddr[0]);
                enqueue_dram(p.dst_cube,
                             DramReq{loc.vault, loc.bank, loc.row,
                                     rec.host ? DramReq::Done::HOST_RESULT_WRITE : DramReq::Done::WRITE,
                                     uint64_t(p.op_ref), 0, rec.paddr[0] / cfg_.paging.page_size, -1});
            } else if (rec.host) {
                host_caches_[size_t(rec.core)].install(rec.paddr[size_t(p.aux)]);
                host_caches_[size_t(rec.core)].mshr_release();
                if (--rec.pending == 0) {
                    Event ev;
                    ev.type = Event::Type::HOST_COMPUTE_DONE;
                    ev.op_idx = uint64_t(p.op_ref);
                    schedule_event(cycle_ + 1, std::move(ev));
                }
            } else {
                operand_ready(uint64_t(p.op_ref));
            }
            break;
        }
        case PacketKind::ACK:
            complete_at_mc(uint64_t(p.op_ref));
            break;
        case PacketKind::MIGRATION_DATA: {
            ++migration_data_delivered_;
            memory_bits_ += uint64_t(p.payload_bits);  // write into the new frame
            if (auto dst = paging_->on_migration_data_delivered(uint64_t(p.op_ref))) {
                queue_packet(make_packet(PacketKind::MIGRATION_ACK, PayloadTag::CONTROL, *dst,
                                         mc_corners_[size_t(offload::mc_of_cube(*dst, cfg_.mesh))],
                                         kControlBits, p.op_ref));
            }
            break;
        }
        case PacketKind::MIGRATION_ACK:
            paging_->on_migration_ack(uint64_t(p.op_ref), cycle_);
            break;
    }
}

void Simulator::apply_migration_completions(const paging::PagingSystem::DmaStep& step) {
    for (uint64_t waiter : step.released_waiters) {
        OpRec& rec = ops_[waiter];
        if (rec.stage != Stage::WAIT_UNLOCK) continue;
        rec.stage = Stage::MC_QUEUED;
        mc_queue_[size_t(rec.mc)].push_front(waiter);
    }
    for (const auto& ev : step.completed) {
        report_.migration_log.push_back({ev.page.vpage, ev.page.pid, ev.src_cube, ev.dst_cube,
                                         ev.mode == paging::MigrationMode::BLOCKING, ev.start_cycle,
                                         ev.end_cycle, ev.aborted});
        if (!ev.aborted && ev.provider_mc >= 0) {
            auto& entry = page_info_[size_t(ev.provider_mc)].touch(ev.page);
            entry.migration_count++;
            entry.migration_latency_history.push(double(ev.latency));
        }
    }
}

void Simulator::periodic_counters() {
    if (cycle_ % uint64_t(cfg_.offload.report_period) != 0) return;
    for (int c = 0; c < cfg_.mesh.cubes(); ++c) {
        double occ = double(cubes_[size_t(c)].nmp_occupancy()) / double(cfg_.cube.nmp_table_entries);
        offload::SystemCounters::decay_into(counters_->nmp_occupancy_avg[size_t(c)], occ);
        offload::SystemCounters::decay_into(counters_->row_hit_avg[size_t(c)],
                                            cubes_[size_t(c)].row_hit_rate());
    }
    for (int m = 0; m < mc_count_; ++m) {
        double q = double(mc_queue_[size_t(m)].size()) / double(cfg_.offload.mc_queue);
        offload::SystemCounters::decay_into(counters_->mc_queue_avg[size_t(m)], q);
    }
}

uint64_t Simulator::opc_den() const { return cycle_ + 1 - tick_start_; }

bool Simulator::count_migration_in_opc() const {
    return cfg_.offload.technique == Technique::PEI && cfg_.offload.remapper == Remapper::AIMM;
}

void Simulator::record_interval_row(uint64_t end_cycle) {
    if (end_cycle <= interval_start_) return;
    uint64_t len = end_cycle - interval_start_;
    IntervalRow row;
    row.index = report_.timeline.size();
    row.start_cycle = interval_start_;
    row.length = len;
    row.ops = interval_ops_;
    uint64_t numerator = interval_ops_;
    row.opc = double(numerator) / double(len);
    uint64_t hops = net_->op_packet_hops() - prev_op_hops_;
    row.avg_hops = interval_ops_ ? double(hops) / double(interval_ops_) : 0.0;
    prev_op_hops_ = net_->op_packet_hops();
    row.per_cube_completions.resize(per_cube_completions_.size());
    for (size_t c = 0; c < per_cube_completions_.size(); ++c) {
        row.per_cube_completions[c] = per_cube_completions_[c] - interval_cube_base_[c];
        interval_cube_base_[c] = per_cube_completions_[c];
    }
    uint64_t hits = 0, accesses = 0;
    for (const auto& cube : cubes_) {
        hits += cube.row_hits();
        accesses += cube.row_accesses();
    }
    uint64_t dh = hits - prev_row_hits_, da = accesses - prev_row_accesses_;
    row.row_hit_rate = da ? double(dh) / double(da) : 0.0;
    prev_row_hits_ = hits;
    prev_row_accesses_ = accesses;
    report_.timeline.push_back(std::move(row));
}

void Simulator::agent_tick() {
    auto candidate = offload::select_candidate_page(page_info_, candidate_cursor_);
    uint64_t mig_delta = migration_data_delivered_;
    double opc = 0.0;
    uint64_t den = opc_den();
    if (candidate) {
        const auto* entry = page_info_[size_t(candidate->mc)].find(candidate->page);
        offload::PageInfoEntry snapshot = *entry;
        agent::StateVector s = agent::encode_state(
            layout_, *counters_, snapshot, agent_->global_actions(),
            page_info_[size_t(candidate->mc)].total_page_accesses, max_hop_, cfg_.agent);
        uint64_t num = tick_ops_;
        if (count_migration_in_opc()) num += mig_delta - tick_mig_base_;
        opc = den ? double(num) / double(den) : 0.0;
        auto res = agent_->tick(s, opc);

        auto effect = agent::apply_action(res.action, snapshot.last_compute_cube, snapshot.last_src1_cube,
                                          cfg_.mesh, current_interval_, action_rng_);
        switch (effect.kind) {
            case agent::ActionEffect::Kind::MIGRATE_PAGE:
                paging_->request_migration(candidate->page, effect.target_cube, cycle_, candidate->mc);
                break;
            case agent::ActionEffect::Kind::COMPUTE_REMAP:
                remap_->put(candidate->page, effect.target_cube);
                break;
            case agent::ActionEffect::Kind::SET_INTERVAL:
                current_interval_ = effect.new_interval;
                break;
            case agent::ActionEffect::Kind::NONE:
                break;
        }
        auto& live = page_info_[size_t(candidate->mc)].touch(candidate->page);
        live.action_history.push(double(int(res.action)));
        report_.training_log.push_back({agent_->ticks(), res.epsilon,
                                        res.trained ? std::optional<double>(res.loss) : std::nullopt,
                                        res.reward, int(res.action), current_interval_});
    }
    tick_start_ = cycle_ + 1;
    tick_ops_ = 0;
    tick_mig_base_ = migration_data_delivered_;
}

void Simulator::tom_epoch() {
    std::vector<int> candidates(memnet::DramMapper::kVariants);
    for (int i = 0; i < memnet::DramMapper::kVariants; ++i) candidates[size_t(i)] = i;
    int best = offload::tom_epoch_select(tom_window_, *mapper_, candidates, mapper_->variant(), cfg_.mesh);
    if (best != mapper_->variant()) {
        mapper_->set_variant(best);
        paging_->rebuild_free_pools();
    }
    tom_window_.clear();
}

void Simulator::run_events() {
    auto it = events_at_.find(cycle_);
    if (it == events_at_.end()) return;
    std::vector<Event> evs = std::move(it->second);
    events_at_.erase(it);
    for (auto& ev : evs) {
        switch (ev.type) {
            case Event::Type::DRAM_DONE:
                switch (ev.req.done) {
                    case DramReq::Done::OPERAND_LOCAL:
                        paging_->note_frame_read_done(ev.req.frame);
                        operand_ready(ev.req.op_idx);
                        break;
                    case DramReq::Done::OPERAND_REMOTE:
                        paging_->note_frame_read_done(ev.req.frame);
                        queue_packet(make_packet(PacketKind::DATA_RESP, PayloadTag::OPERAND, ev.cube,
                                                 ev.req.reply_to, kRespBits, int64_t(ev.req.op_idx),
                                                 ev.req.slot));
                        break;
                    case DramReq::Done::WRITE:
                        break;
                    case DramReq::Done::HOST_RESULT_WRITE: {
                        OpRec& rec = ops_[ev.req.op_idx];
                        queue_packet(make_packet(PacketKind::ACK, PayloadTag::CONTROL, ev.cube,
                                                 mc_corners_[size_t(rec.mc)], kControlBits,
                                                 int64_t(ev.req.op_idx)));
                        break;
                    }
                }
                break;
            case Event::Type::COMPUTE_DONE:
                finish_compute(ev.op_idx);
                break;
            case Event::Type::HOST_COMPUTE_DONE: {
                OpRec& rec = ops_[ev.op_idx];
                queue_packet(make_packet(PacketKind::DATA_RESP, PayloadTag::RESULT,
                                         mc_corners_[size_t(rec.mc)], rec.cube[0], kRespBits,
                                         int64_t(ev.op_idx)));
                break;
            }
        }
    }
}

void Simulator::step_cycle() {
    run_events();
    for (const auto& d : net_->step(cycle_)) handle_delivery(d);
    auto dma = paging_->step_dma(cycle_, [&](Packet& p) {
        p.id = packet_ids_++;
        if (!net_->try_inject(p, cycle_)) return false;
        memory_bits_ += uint64_t(p.payload_bits);  // read from the old frame
        return true;
    });
    apply_migration_completions(dma);
    dispatch_stream();
    mc_issue();
    dram_step();
    compute_stage();
    drain_injections();
    periodic_counters();
    if (cfg_.offload.access_aging_cycles && cycle_ > 0 && cycle_ % cfg_.offload.access_aging_cycles == 0)
        for (auto& cache : page_info_) cache.age_counters();
    if (cycle_ + 1 - interval_start_ >= uint64_t(current_interval_)) {
        record_interval_row(cycle_ + 1);
        if (cfg_.offload.remapper == Remapper::AIMM) agent_tick();
        interval_start_ = cycle_ + 1;
        interval_ops_ = 0;
    }
    if (cfg_.offload.remapper == Remapper::TOM && cycle_ + 1 >= next_tom_epoch_) {
        tom_epoch();
        next_tom_epoch_ += cfg_.offload.tom_epoch_cycles;
    }
    ++cycle_;
}

void Simulator::run_repeat(int repeat) {
    uint64_t guard = cfg_.sim.max_cycles ? cfg_.sim.max_cycles
                                         : 1'000'000 + uint64_t(stream_.size()) * 5'000;
    uint64_t total = stream_.size();
    while (completed_ < total) {
        if (cycle_ > guard)
            throw SimError("simulation made no progress by cycle " + std::to_string(cycle_) +
                           " (repeat " + std::to_string(repeat) + ")");
        step_cycle();
    }
    record_interval_row(cycle_);  // close the partial interval

    // post-drain consistency: every table entry retired, nothing parked
    for (const auto& cube : cubes_) {
        if (cube.nmp_occupancy() != 0 || cube.retire_errors != 0)
            throw SimError("nmp table inconsistent after drain at cycle " + std::to_string(cycle_));
    }
    for (const auto& q : mc_queue_)
        if (!q.empty()) throw SimError("mc queue not drained at cycle " + std::to_string(cycle_));
}

void Simulator::finish_repeat_metrics(int repeat) {
    RepeatSummary rs;
    rs.repeat = repeat;
    rs.cycles = cycle_;
    rs.ops = completed_;
    uint64_t opc_num = completed_ + (count_migration_in_opc() ? migration_data_delivered_ : 0);
    rs.opc = cycle_ ? double(opc_num) / double(cycle_) : 0.0;
    rs.avg_hop = completed_ ? double(net_->op_packet_hops()) / double(completed_) : 0.0;
    rs.migrations_completed = paging_->migrations_completed;
    rs.migrations_aborted = paging_->migrations_aborted;
    report_.repeats.push_back(rs);
}

MetricsReport Simulator::run() {
    int repeats = cfg_.effective_repeats(processes_.size());
    report_ = MetricsReport{};
    report_.technique = offload::technique_name(cfg_.offload.technique);
    report_.remapper = remapper_name(cfg_.offload.remapper);
    report_.policy = cfg_.paging.policy == paging::AllocPolicy::DEFAULT   ? "default"
                     : cfg_.paging.policy == paging::AllocPolicy::HOARD   ? "hoard"
                                                                          : "hotspot";
    for (int r = 1; r <= repeats; ++r) {
        bool is_final = r == repeats;
        reset_repeat();
        // only the final repeat's logs go into the report
        report_.timeline.clear();
        report_.migration_log.clear();
        report_.training_log.clear();
        if (is_final) net_->event_log_enabled = collect_events;
        run_repeat(r);
        finish_repeat_metrics(r);
        if (agent_) agent_->end_episode();
        if (is_final) {
            report_.total_cycles = cycle_;
            report_.ops_completed = completed_;
            report_.opc_ops = completed_ + (count_migration_in_opc() ? migration_data_delivered_ : 0);
            report_.opc = cycle_ ? double(report_.opc_ops) / double(cycle_) : 0.0;
            report_.avg_hop_count =
                completed_ ? double(net_->op_packet_hops()) / double(completed_) : 0.0;
            report_.per_cube_completions = per_cube_completions_;
            report_.utilization = compute_utilization(per_cube_completions_);
            uint64_t hits = 0, acc = 0;
            for (const auto& cube : cubes_) {
                report_.row_hit_rates.push_back(cube.row_hit_rate());
                hits += cube.row_hits();
                acc += cube.row_accesses();
            }
            report_.row_hit_rate_overall = acc ? double(hits) / double(acc) : 0.0;
            report_.pages_touched = paging_->mapped_pages();
            report_.pages_migrated = paging_->pages_ever_migrated();
            report_.page_accesses_total = page_accesses_total_;
            report_.page_accesses_to_migrated = page_accesses_migrated_;
            report_.migrations_completed = paging_->migrations_completed;
            report_.migrations_aborted = paging_->migrations_aborted;
            report_.migration_drops_full = paging_->drops_full;
            report_.migration_drops_inflight = paging_->drops_inflight;
            report_.migration_drops_noop = paging_->drops_noop;
            EnergyTallies t;
            t.network_bit_hops = net_->total_bit_hops();
            t.memory_bits = memory_bits_;
            for (const auto& c : page_info_) t.page_info_accesses += c.accesses;
            t.nmp_table_accesses = nmp_table_accesses_;
            t.migration_queue_accesses = paging_->migration_queue_accesses;
            t.mdma_accesses = paging_->mdma_buffer_accesses;
            if (agent_) {
                t.weight_accesses = agent_->net().weight_accesses - agent_weight_base_;
                t.replay_accesses = agent_->replay().accesses - agent_replay_base_;
                t.state_buffer_accesses = agent_->state_buffer_accesses - agent_state_base_;
            }
            report_.tallies = t;
            report_.energy = compute_energy(t);
            if (collect_events) events = std::move(net_->event_log);
        }
    }
    if (agent_ && !cfg_.checkpoint_out.empty()) agent_->net().save(cfg_.checkpoint_out);
    return report_;
}

MetricsReport run_simulation(const SimConfig& cfg, std::optional<uint64_t> seed_override,
                             bool collect_events, std::vector<memnet::NetEvent>* events_out) {
    Simulator sim(cfg, seed_override ? *seed_override : 0);
    sim.collect_events = collect_events;
    MetricsReport report = sim.run();
    if (events_out) *events_out = std::move(sim.events);
    return report;
}

}  // namespace nmpsim::harness
