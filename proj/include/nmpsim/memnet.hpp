#pragma once

#include <array>
#include <cassert>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "nmpsim/common.hpp"

namespace nmpsim::memnet {

struct MeshConfig {
    int width = 4;
    int height = 4;
    int link_bits = 128;
    int router_stages = 3;
    int vc_count = 5;
    int port_count = 6;      // N, S, E, W, inject, eject
    int buffer_flits = 8;    // input buffer depth per (port, vc)

    int cubes() const { return width * height; }
};

struct Coord {
    int x = 0;
    int y = 0;
    bool operator==(const Coord&) const = default;
};

inline Coord coord_of(int cube_id, const MeshConfig& m) { return {cube_id % m.width, cube_id / m.width}; }
inline int cube_id_of(Coord c, const MeshConfig& m) { return c.y * m.width + c.x; }
inline int manhattan(Coord a, Coord b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

enum class Port : uint8_t { EAST, WEST, NORTH, SOUTH, INJECT, EJECT };

// Static XY routing: correct X first, then Y; cur == dst ejects locally.
Port route_next_hop(Coord cur, Coord dst);

enum class PacketKind : uint8_t { NMP_REQ, DATA_REQ, DATA_RESP, ACK, MIGRATION_DATA, MIGRATION_ACK };

// Payload discrimination beyond the wire kind (a DATA_RESP is either a fetched
// operand or a forwarded result).
enum class PayloadTag : uint8_t { CONTROL, OPERAND, RESULT };

struct Packet {
    uint64_t id = 0;
    PacketKind kind = PacketKind::NMP_REQ;
    PayloadTag tag = PayloadTag::CONTROL;
    int src_cube = 0;
    int dst_cube = 0;
    int payload_bits = 128;
    int hop_count = 0;
    uint64_t inject_cycle = 0;
    int64_t op_ref = -1;   // NmpOp seq / migration id, -1 when unused
    int aux = 0;           // operand slot, migration chunk index, ...
};

// Protocol classes get disjoint VCs so requests can never block behind the
// responses they depend on.
int vc_for_kind(PacketKind k, int vc_count);

struct DeliveredPacket {
    Packet packet;
    uint64_t cycle = 0;
};

struct NetEvent {
    uint64_t cycle;
    char kind;  // 'I' inject, 'D' deliver
    uint64_t packet_id;
    int cube;
};

// Cycle-stepped W x H mesh with per-(port,VC) input buffers, store-and-forward
// packet switching, credit (token) flow control and round-robin arbitration.
// Packets are never dropped: try_inject refuses when the injection buffer has
// no room and backpressure stalls transfers when downstream credits run out.
class Network {
  public:
    explicit Network(const MeshConfig& cfg);

    // Refuses (returns false) when the source injection buffer lacks tokens.
    bool try_inject(const Packet& p, uint64_t cycle);
    bool can_inject(const Packet& p) const;

    // Advance one cycle; returns packets delivered (ejected) this cycle.
    const std::vector<DeliveredPacket>& step(uint64_t cycle);

    uint64_t injected() const { return injected_; }
    uint64_t delivered() const { return delivered_; }
    uint64_t in_flight() const { return injected_ - delivered_; }
    // Recounts packets resident in buffers and on links; equals in_flight().
    uint64_t audit_resident() const;

    uint64_t total_bit_hops() const { return bit_hops_; }
    uint64_t op_packet_hops() const { return op_hops_; }
    uint64_t op_packets_delivered() const { return op_delivered_; }

    const MeshConfig& config() const { return cfg_; }

    bool event_log_enabled = false;
    std::vector<NetEvent> event_log;

  private:
    struct BufferedPacket {
        Packet pkt;
        uint64_t ready_cycle;
    };
    struct InputBuffer {
        std::deque<BufferedPacket> q;
        int used_flits = 0;
    };
    struct Router {
        std::array<std::array<InputBuffer, 5>, 5> in;  // [in_port][vc], ports E,W,N,S,INJECT
        std::array<uint64_t, 4> link_busy_until{};     // outgoing E,W,N,S
        std::array<int, 4> rr{};                       // arbitration pointer per output
        int resident = 0;
    };
    struct Arrival {
        Packet pkt;
        int router;
        int in_port;  // 0..3 link port, 4 inject-local delivery
        bool deliver;
    };

    int flits_of(const Packet& p) const;
    void deliver(const Packet& p, uint64_t cycle);
    void log(uint64_t cycle, char kind, const Packet& p, int cube);

    MeshConfig cfg_;
    std::vector<Router> routers_;
    std::map<uint64_t, std::vector<Arrival>> arrivals_;  // keyed by cycle
    std::vector<DeliveredPacket> delivered_now_;
    uint64_t injected_ = 0;
    uint64_t delivered_ = 0;
    uint64_t bit_hops_ = 0;
    uint64_t op_hops_ = 0;
    uint64_t op_delivered_ = 0;
    uint64_t on_link_ = 0;
};

// ---------------------------------------------------------------------------
// DRAM cube state

struct CubeTiming {
    int row_hit_cycles = 18;
    int row_miss_cycles = 42;
};

struct CubeGeometry {
    int vaults = 32;
    int banks_per_vault = 8;
};

struct AccessResult {
    int latency = 0;
    bool hit = false;
};

// Per-cube DRAM banks (open-row bookkeeping) plus the NMP-op table.
class CubeState {
  public:
    CubeState(int cube_id, const CubeGeometry& geo, const CubeTiming& timing, int nmp_capacity);

    // Row-buffer bookkeeping for one access; the caller owns bank scheduling.
    AccessResult access(int vault, int bank, int row);

    bool nmp_insert();                // false when the table is full
    void nmp_retire();                // absent entry: asserts in debug, counted in release
    int nmp_occupancy() const { return nmp_occupancy_; }
    int nmp_capacity() const { return nmp_capacity_; }

    uint64_t row_hits() const { return row_hits_; }
    uint64_t row_accesses() const { return row_accesses_; }
    double row_hit_rate() const { return row_accesses_ ? double(row_hits_) / double(row_accesses_) : 0.0; }

    uint64_t nmp_inserts = 0;
    uint64_t nmp_rejects = 0;
    uint64_t nmp_retires = 0;
    uint64_t retire_errors = 0;

    int cube_id() const { return id_; }
    const CubeGeometry& geometry() const { return geo_; }

  private:
    int id_;
    CubeGeometry geo_;
    CubeTiming timing_;
    std::vector<int> open_row_;  // -1 = closed, indexed vault*banks+bank
    int nmp_capacity_;
    int nmp_occupancy_ = 0;
    uint64_t row_hits_ = 0;
    uint64_t row_accesses_ = 0;
};

// ---------------------------------------------------------------------------
// Physical address -> DRAM location

struct DramLoc {
    int cube;
    int vault;
    int bank;
    int row;
    int column;
    bool operator==(const DramLoc&) const = default;
};

// Bijective physical-to-DRAM hash. The cube index is always a function of the
// frame number alone, so migrating a page frame relocates the whole page.
// `variant` rotates the frame-index bits (the TOM candidate family);
// variant 0 is the identity mapping.
class DramMapper {
  public:
    DramMapper(const MeshConfig& mesh, const CubeGeometry& geo, uint64_t cube_capacity_bytes,
               uint64_t page_size_bytes);

    DramLoc map(uint64_t paddr) const;
    uint64_t unmap(const DramLoc& loc) const;

    int cube_of_frame(uint64_t frame) const;
    uint64_t frames_per_cube() const { return frames_per_cube_; }
    uint64_t total_frames() const { return total_frames_; }
    uint64_t total_bytes() const { return total_frames_ * page_size_; }
    uint64_t page_size() const { return page_size_; }

    int variant() const { return variant_; }
    void set_variant(int v);
    static constexpr int kVariants = 8;

  private:
    uint64_t permute_frame(uint64_t frame) const;

    int cubes_;
    CubeGeometry geo_;
    uint64_t page_size_;
    uint64_t frames_per_cube_;
    uint64_t total_frames_;
    int frame_bits_;
    int variant_ = 0;
};

}  // namespace nmpsim::memnet
