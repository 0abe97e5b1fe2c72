#include "nmpsim/memnet.hpp"

#include <algorithm>

namespace nmpsim::memnet {

Port route_next_hop(Coord cur, Coord dst) {
    if (cur.x < dst.x) return Port::EAST;
    if (cur.x > dst.x) return Port::WEST;
    if (cur.y < dst.y) return Port::NORTH;
    if (cur.y > dst.y) return Port::SOUTH;
    return Port::EJECT;
}

int vc_for_kind(PacketKind k, int vc_count) {
    int vc = 0;
    switch (k) {
        case PacketKind::NMP_REQ: vc = 0; break;
        case PacketKind::DATA_REQ: vc = 1; break;
        case PacketKind::DATA_RESP: vc = 2; break;
        case PacketKind::ACK: vc = 3; break;
        case PacketKind::MIGRATION_ACK: vc = 3; break;
        case PacketKind::MIGRATION_DATA: vc = 4; break;
    }
    return vc % vc_count;
}

namespace {
constexpr int kInPorts = 5;  // E, W, N, S, INJECT
constexpr int kDirs = 4;

int opposite(int dir) {
    switch (dir) {
        case 0: return 1;  // arrived from the west side going EAST
        case 1: return 0;
        case 2: return 3;
        case 3: return 2;
    }
    return 0;
}

int dir_of(Port p) { return int(p); }
}  // namespace

Network::Network(const MeshConfig& cfg) : cfg_(cfg) {
    if (cfg.width < 1 || cfg.height < 1) throw ConfigError("mesh dimensions must be positive");
    if (cfg.vc_count < 1 || cfg.vc_count > 5) throw ConfigError("vc_count must be in [1,5]");
    if (cfg.buffer_flits < 1) throw ConfigError("buffer_flits must be positive");
    routers_.resize(size_t(cfg.cubes()));
}

int Network::flits_of(const Packet& p) const {
    return std::max(1, (p.payload_bits + cfg_.link_bits - 1) / cfg_.link_bits);
}

void Network::log(uint64_t cycle, char kind, const Packet& p, int cube) {
    if (event_log_enabled) event_log.push_back({cycle, kind, p.id, cube});
}

bool Network::can_inject(const Packet& p) const {
    if (p.src_cube == p.dst_cube) return true;
    int vc = vc_for_kind(p.kind, cfg_.vc_count);
    const auto& buf = routers_[size_t(p.src_cube)].in[4][size_t(vc)];
    return buf.used_flits + flits_of(p) <= cfg_.buffer_flits;
}

bool Network::try_inject(const Packet& p, uint64_t cycle) {
    if (p.src_cube < 0 || p.src_cube >= cfg_.cubes() || p.dst_cube < 0 || p.dst_cube >= cfg_.cubes())
        throw InvalidAddress("packet endpoint outside mesh");
    Packet pkt = p;
    pkt.inject_cycle = cycle;
    pkt.hop_count = 0;
    int flits = flits_of(pkt);
    if (pkt.src_cube == pkt.dst_cube) {
        // local ejection: one router traversal, no links, zero hops
        arrivals_[cycle + uint64_t(cfg_.router_stages + flits)].push_back(
            Arrival{pkt, pkt.src_cube, 4, true});
        ++on_link_;
        ++injected_;
        log(cycle, 'I', pkt, pkt.src_cube);
        return true;
    }
    int vc = vc_for_kind(pkt.kind, cfg_.vc_count);
    auto& buf = routers_[size_t(pkt.src_cube)].in[4][size_t(vc)];
    if (buf.used_flits + flits > cfg_.buffer_flits) return false;
    buf.used_flits += flits;
    buf.q.push_back({pkt, cycle + uint64_t(cfg_.router_stages)});
    routers_[size_t(pkt.src_cube)].resident++;
    ++injected_;
    log(cycle, 'I', pkt, pkt.src_cube);
    return true;
}

void Network::deliver(const Packet& p, uint64_t cycle) {
    ++delivered_;
    if (p.kind != PacketKind::MIGRATION_DATA && p.kind != PacketKind::MIGRATION_ACK) {
        op_hops_ += uint64_t(p.hop_count);
        ++op_delivered_;
    }
    delivered_now_.push_back({p, cycle});
    log(cycle, 'D', p, p.dst_cube);
}

const std::vector<DeliveredPacket>& Network::step(uint64_t cycle) {
    delivered_now_.clear();

    // 1. link arrivals land in input buffers or eject
    auto it = arrivals_.find(cycle);
    if (it != arrivals_.end()) {
        for (auto& arr : it->second) {
            --on_link_;
            if (arr.deliver) {
                deliver(arr.pkt, cycle);
            } else {
                auto& buf = routers_[size_t(arr.router)].in[size_t(arr.in_port)][size_t(
                    vc_for_kind(arr.pkt.kind, cfg_.vc_count))];
                buf.q.push_back({arr.pkt, cycle + uint64_t(cfg_.router_stages)});
                routers_[size_t(arr.router)].resident++;
            }
        }
        arrivals_.erase(it);
    }

    // 2. per-output round-robin arbitration over (in_port, vc) heads
    const int slots = kInPorts * cfg_.vc_count;
    for (int r = 0; r < cfg_.cubes(); ++r) {
        Router& router = routers_[size_t(r)];
        if (router.resident == 0) continue;
        Coord cur = coord_of(r, cfg_);
        for (int d = 0; d < kDirs; ++d) {
            if (router.link_busy_until[size_t(d)] > cycle) continue;
            Coord nc = cur;
            if (d == 0) nc.x++;
            else if (d == 1) nc.x--;
            else if (d == 2) nc.y++;
            else nc.y--;
            if (nc.x < 0 || nc.x >= cfg_.width || nc.y < 0 || nc.y >= cfg_.height) continue;
            int nr = cube_id_of(nc, cfg_);
            for (int scan = 0; scan < slots; ++scan) {
                int idx = (router.rr[size_t(d)] + scan) % slots;
                int in_port = idx / cfg_.vc_count;
                int vc = idx % cfg_.vc_count;
                auto& buf = router.in[size_t(in_port)][size_t(vc)];
                if (buf.q.empty()) continue;
                BufferedPacket& head = buf.q.front();
                if (head.ready_cycle > cycle) continue;
                if (dir_of(route_next_hop(cur, coord_of(head.pkt.dst_cube, cfg_))) != d) continue;
                int flits = flits_of(head.pkt);
                bool will_deliver = nr == head.pkt.dst_cube;
                int opp = opposite(d);
                if (!will_deliver) {
                    auto& down = routers_[size_t(nr)].in[size_t(opp)][size_t(vc)];
                    if (down.used_flits + flits > cfg_.buffer_flits) continue;  // no tokens
                    down.used_flits += flits;
                }
                Packet pkt = head.pkt;
                buf.q.pop_front();
                buf.used_flits -= flits;
                router.resident--;
                pkt.hop_count++;
                bit_hops_ += uint64_t(pkt.payload_bits);
                router.link_busy_until[size_t(d)] = cycle + uint64_t(flits);
                arrivals_[cycle + uint64_t(flits)].push_back(Arrival{pkt, nr, opp, will_deliver});
                ++on_link_;
                router.rr[size_t(d)] = (idx + 1) % slots;
                break;
            }
        }
    }
    return delivered_now_;
}

uint64_t Network::audit_resident() const {
    uint64_t n = on_link_;
    for (const auto& r : routers_)
        for (const auto& port : r.in)
            for (const auto& buf : port) n += buf.q.size();
    return n;
}

// ---------------------------------------------------------------------------

CubeState::CubeState(int cube_id, const CubeGeometry& geo, const CubeTiming& timing, int nmp_capacity)
    : id_(cube_id), geo_(geo), timing_(timing), nmp_capacity_(nmp_capacity) {
    if (geo.vaults < 1 || geo.banks_per_vault < 1) throw ConfigError("cube geometry must be positive");
    if (timing.row_hit_cycles >= timing.row_miss_cycles)
        throw ConfigError("row hit latency must be below miss latency");
    open_row_.assign(size_t(geo.vaults) * size_t(geo.banks_per_vault), -1);
}

AccessResult CubeState::access(int vault, int bank, int row) {
    if (vault < 0 || vault >= geo_.vaults || bank < 0 || bank >= geo_.banks_per_vault || row < 0)
        throw InvalidAddress("dram access outside cube geometry");
    int& open = open_row_[size_t(vault) * size_t(geo_.banks_per_vault) + size_t(bank)];
    bool hit = open == row;
    open = row;
    ++row_accesses_;
    if (hit) ++row_hits_;
    return {hit ? timing_.row_hit_cycles : timing_.row_miss_cycles, hit};
}

bool CubeState::nmp_insert() {
    if (nmp_occupancy_ >= nmp_capacity_) {
        ++nmp_rejects;
        return false;
    }
    ++nmp_occupancy_;
    ++nmp_inserts;
    return true;
}

void CubeState::nmp_retire() {
    assert(nmp_occupancy_ > 0 && "nmp_retire without a matching insert");
    if (nmp_occupancy_ == 0) {
        ++retire_errors;
        return;
    }
    --nmp_occupancy_;
    ++nmp_retires;
}

// ---------------------------------------------------------------------------

DramMapper::DramMapper(const MeshConfig& mesh, const CubeGeometry& geo, uint64_t cube_capacity_bytes,
                       uint64_t page_size_bytes)
    : cubes_(mesh.cubes()), geo_(geo), page_size_(page_size_bytes) {
    if (!is_pow2(page_size_)) throw ConfigError("page size must be a power of two");
    if (cube_capacity_bytes % page_size_ != 0) throw ConfigError("cube capacity must be page aligned");
    frames_per_cube_ = cube_capacity_bytes / page_size_;
    if (!is_pow2(uint64_t(cubes_)) || !is_pow2(frames_per_cube_))
        throw ConfigError("cube count and frames per cube must be powers of two");
    if (frames_per_cube_ < uint64_t(geo_.banks_per_vault))
        throw ConfigError("need at least one frame per bank");
    total_frames_ = frames_per_cube_ * uint64_t(cubes_);
    frame_bits_ = log2_exact(total_frames_);
}

void DramMapper::set_variant(int v) {
    if (v < 0 || v >= kVariants) throw InvalidParameter("mapping variant out of range");
    variant_ = v;
}

uint64_t DramMapper::permute_frame(uint64_t frame) const {
    int rot = variant_ % frame_bits_;
    if (rot == 0) return frame;
    uint64_t mask = (frame_bits_ == 64) ? ~0ULL : ((1ULL << frame_bits_) - 1);
    return ((frame >> rot) | (frame << (frame_bits_ - rot))) & mask;
}

DramLoc DramMapper::map(uint64_t paddr) const {
    if (paddr >= total_bytes()) throw InvalidAddress("physical address beyond capacity");
    uint64_t frame = paddr / page_size_;
    uint64_t offset = paddr % page_size_;
    uint64_t pf = permute_frame(frame);
    uint64_t local = pf % frames_per_cube_;
    uint64_t unit = offset / 64;
    DramLoc loc;
    loc.cube = int(pf / frames_per_cube_);
    loc.vault = int(unit % uint64_t(geo_.vaults));
    loc.bank = int(local % uint64_t(geo_.banks_per_vault));
    loc.row = int(local / uint64_t(geo_.banks_per_vault));
    loc.column = int((unit / uint64_t(geo_.vaults)) * 64 + offset % 64);
    return loc;
}

uint64_t DramMapper::unmap(const DramLoc& loc) const {
    uint64_t local = uint64_t(loc.row) * uint64_t(geo_.banks_per_vault) + uint64_t(loc.bank);
    uint64_t pf = uint64_t(loc.cube) * frames_per_cube_ + local;
    // invert the rotation
    int rot = variant_ % frame_bits_;
    uint64_t mask = (frame_bits_ == 64) ? ~0ULL : ((1ULL << frame_bits_) - 1);
    uint64_t frame = rot == 0 ? pf : (((pf << rot) | (pf >> (frame_bits_ - rot))) & mask);
    uint64_t unit = uint64_t(loc.column / 64) * uint64_t(geo_.vaults) + uint64_t(loc.vault);
    return frame * page_size_ + unit * 64 + uint64_t(loc.column % 64);
}

int DramMapper::cube_of_frame(uint64_t frame) const {
    return int(permute_frame(frame) / frames_per_cube_);
}

}  // namespace nmpsim::memnet
