#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nmpsim/memnet.hpp"
#include "nmpsim/paging.hpp"

using namespace nmpsim;
using namespace nmpsim::paging;

namespace {

struct Fixture {
    memnet::MeshConfig mesh;
    memnet::CubeGeometry geo;
    memnet::DramMapper mapper;
    PagingSystem paging;

    explicit Fixture(PagingConfig cfg = {}, uint64_t cube_bytes = 64 * 1024)
        : mapper(mesh, geo, cube_bytes, 4096), paging(cfg, mapper) {
        paging.declare_process(0, 1 << 24);
    }
};

uint64_t frame_of(const PagingSystem& p, PageKey key) { return *p.peek_frame(key); }

void check_conservation(const PagingSystem& p) {
    auto fa = p.frame_accounting();
    CHECK(fa.free + fa.mapped + fa.inflight_new + fa.draining == fa.total);
}

}  // namespace

TEST_CASE("default policy stripes allocations round-robin across cubes") {
    Fixture f;
    for (int i = 0; i < 4; ++i) {
        auto tr = f.paging.translate(0, uint64_t(i) * 4096, 0);
        CHECK(tr.first_touch);
        CHECK(f.paging.cube_of_page({0, uint64_t(i)}) == i);
    }
    // second touch is idempotent
    auto tr1 = f.paging.translate(0, 0, 0);
    auto tr2 = f.paging.translate(0, 8, 0);
    CHECK_FALSE(tr1.first_touch);
    CHECK(tr2.paddr == tr1.paddr + 8);
}

TEST_CASE("hoard policy packs 64 consecutive allocations into one cube") {
    PagingConfig cfg;
    cfg.policy = AllocPolicy::HOARD;
    Fixture f(cfg, 1 << 20);  // 256 frames per cube
    int cube = -1;
    for (uint64_t i = 0; i < 64; ++i) {
        f.paging.translate(0, i * 4096, 0);
        int c = f.paging.cube_of_page({0, i});
        if (cube < 0) cube = c;
        CHECK(c == cube);
    }
    // the 65th allocation opens a fresh chunk
    f.paging.translate(0, 64 * 4096, 0);
    CHECK(f.paging.cube_of_page({0, 64}) >= 0);
}

TEST_CASE("hoard chunks keep concurrent processes apart") {
    PagingConfig cfg;
    cfg.policy = AllocPolicy::HOARD;
    Fixture f(cfg, 1 << 20);
    f.paging.declare_process(1, 1 << 24);
    for (uint64_t i = 0; i < 32; ++i) {
        f.paging.translate(0, i * 4096, 0);
        f.paging.translate(1, i * 4096, 0);
    }
    // frames interleave at chunk granularity only: each 64-frame chunk holds one pid
    std::map<uint64_t, std::set<uint32_t>> chunk_pids;
    for (uint64_t i = 0; i < 32; ++i) {
        chunk_pids[frame_of(f.paging, {0, i}) / 64].insert(0);
        chunk_pids[frame_of(f.paging, {1, i}) / 64].insert(1);
    }
    for (const auto& [chunk, pids] : chunk_pids) CHECK(pids.size() == 1);
}

TEST_CASE("hotspot policy drains cube 0 first") {
    PagingConfig cfg;
    cfg.policy = AllocPolicy::HOTSPOT;
    Fixture f(cfg);  // 16 frames per cube
    for (uint64_t i = 0; i < 16; ++i) {
        f.paging.translate(0, i * 4096, 0);
        CHECK(f.paging.cube_of_page({0, i}) == 0);
    }
    f.paging.translate(0, 16 * 4096, 0);
    CHECK(f.paging.cube_of_page({0, 16}) == 1);  // spill once cube 0 is full
}

TEST_CASE("preferred cube is honored when a frame is free there") {
    Fixture f;
    uint64_t frame = f.paging.allocate_frame({0, 100}, 5);
    CHECK(f.mapper.cube_of_frame(frame) == 5);
}

TEST_CASE("allocation fails out-of-memory when every pool is empty") {
    Fixture f;  // 256 frames total
    for (uint64_t i = 0; i < 256; ++i) f.paging.translate(0, i * 4096, 0);
    CHECK_THROWS_AS(f.paging.translate(0, 256 * 4096, 0), OutOfMemory);
}

TEST_CASE("translate rejects addresses outside the process extent") {
    Fixture f;
    CHECK_THROWS_AS(f.paging.translate(0, 1ULL << 40, 0), SegFault);
    CHECK_THROWS_AS(f.paging.translate(9, 0, 0), SegFault);
}

TEST_CASE("migration requests derive mode from permission and drop duplicates") {
    Fixture f;
    f.paging.set_readonly(0, 0x10000, 0x11000);  // page 16 read-only
    f.paging.translate(0, 0, 0);                 // page 0, read-write
    f.paging.translate(0, 0x10000, 0);           // page 16, read-only
    CHECK(f.paging.permission_of({0, 0}) == Permission::READ_WRITE);
    CHECK(f.paging.permission_of({0, 16}) == Permission::READ_ONLY);

    int cur = f.paging.cube_of_page({0, 0});
    CHECK(f.paging.request_migration({0, 0}, cur, 0, -1) == MigrationOutcome::DROPPED_NOOP);
    CHECK(f.paging.request_migration({0, 0}, (cur + 1) % 16, 0, -1) == MigrationOutcome::QUEUED);
    CHECK(f.paging.request_migration({0, 0}, (cur + 2) % 16, 0, -1) == MigrationOutcome::DROPPED_INFLIGHT);
    CHECK(f.paging.drops_noop == 1);
    CHECK(f.paging.drops_inflight == 1);
    CHECK_THROWS_AS(f.paging.request_migration({0, 999}, 1, 0, -1), InvalidPage);
}

TEST_CASE("migration queue rejects the 129th request") {
    PagingConfig cfg;
    cfg.migration_queue_capacity = 128;
    Fixture f(cfg, 1 << 20);
    for (uint64_t i = 0; i < 129; ++i) f.paging.translate(0, i * 4096, 0);
    int queued = 0, dropped = 0;
    for (uint64_t i = 0; i < 129; ++i) {
        int dst = (f.paging.cube_of_page({0, i}) + 1) % 16;
        auto out = f.paging.request_migration({0, i}, dst, 0, -1);
        if (out == MigrationOutcome::QUEUED) ++queued;
        if (out == MigrationOutcome::DROPPED_FULL) ++dropped;
    }
    CHECK(queued == 128);
    CHECK(dropped == 1);
    CHECK(f.paging.drops_full == 1);
}

// Drives the DMA against a real 2-cube network and checks the full blocking
// migration protocol, with the expected latency derived from a hand-stepped
// pipeline trace: 64 packets of 512 bits = 4 flits each on a 128-bit link,
// first grant at cycle 3, then one grant per 4-cycle serialization window,
// so packet k lands at 7 + 4k and the last at 259; the 1-flit ack injected
// that cycle is ready at 262, granted, and lands at 263.
TEST_CASE("blocking migration over a 2-cube mesh: packets, latency, unlock order") {
    memnet::MeshConfig mesh;
    mesh.width = 2;
    mesh.height = 1;
    memnet::DramMapper mapper(mesh, memnet::CubeGeometry{}, 64 * 1024, 4096);
    PagingConfig cfg;
    PagingSystem paging(cfg, mapper);
    paging.declare_process(0, 1 << 20);
    memnet::Network net(mesh);

    paging.translate(0, 0, 0);  // page 0 lands in cube 0 (round-robin start)
    REQUIRE(paging.cube_of_page({0, 0}) == 0);
    uint64_t old_frame = frame_of(paging, {0, 0});
    REQUIRE(paging.request_migration({0, 0}, 1, 0, 3) == MigrationOutcome::QUEUED);

    uint64_t data_packets = 0;
    std::vector<MigrationEvent> completed;
    std::vector<uint64_t> released;
    bool deferred_seen = false;
    uint64_t packet_id = 0;

    for (uint64_t cycle = 0; cycle < 500; ++cycle) {
        for (const auto& d : net.step(cycle)) {
            if (d.packet.kind == memnet::PacketKind::MIGRATION_DATA) {
                ++data_packets;
                if (auto dst = paging.on_migration_data_delivered(uint64_t(d.packet.op_ref))) {
                    memnet::Packet ack;
                    ack.id = packet_id++;
                    ack.kind = memnet::PacketKind::MIGRATION_ACK;
                    ack.src_cube = *dst;
                    ack.dst_cube = 0;
                    ack.payload_bits = 128;
                    ack.op_ref = d.packet.op_ref;
                    REQUIRE(net.try_inject(ack, cycle));
                }
            } else if (d.packet.kind == memnet::PacketKind::MIGRATION_ACK) {
                paging.on_migration_ack(uint64_t(d.packet.op_ref), cycle);
            }
        }
        auto step = paging.step_dma(cycle, [&](memnet::Packet& p) {
            p.id = packet_id++;
            return net.try_inject(p, cycle);
        });
        for (auto w : step.released_waiters) released.push_back(w);
        for (auto& ev : step.completed) completed.push_back(ev);
        check_conservation(paging);

        if (cycle == 50) {
            // in flight and blocking: the access defers
            auto tr = paging.translate(0, 8, 42);
            CHECK(tr.status == TranslateResult::Status::DEFERRED);
            deferred_seen = true;
        }
        if (!completed.empty()) break;
    }

    REQUIRE(completed.size() == 1);
    CHECK(deferred_seen);
    CHECK(data_packets == 64);  // 4096 * 8 / 512
    const auto& ev = completed[0];
    CHECK(ev.mode == MigrationMode::BLOCKING);
    CHECK(ev.latency == 263);
    CHECK(ev.end_cycle - ev.start_cycle == 263);
    CHECK(ev.provider_mc == 3);
    // deferred waiter released, now served from the new frame in cube 1
    REQUIRE(released.size() == 1);
    CHECK(released[0] == 42);
    CHECK(paging.cube_of_page({0, 0}) == 1);
    CHECK(frame_of(paging, {0, 0}) != old_frame);
    auto tr = paging.translate(0, 8, 0);
    CHECK(tr.status == TranslateResult::Status::OK);
    CHECK(mapper.cube_of_frame(tr.paddr / 4096) == 1);
    CHECK(paging.migrations_completed == 1);
    check_conservation(paging);
    // old frame is back in the free pool: allocating in cube 0 reuses it
    CHECK(paging.allocate_frame({0, 50}, 0) == old_frame);
}

TEST_CASE("non-blocking migration serves the old frame while in flight") {
    memnet::MeshConfig mesh;
    mesh.width = 2;
    mesh.height = 1;
    memnet::DramMapper mapper(mesh, memnet::CubeGeometry{}, 64 * 1024, 4096);
    PagingSystem paging(PagingConfig{}, mapper);
    paging.declare_process(0, 1 << 20);
    paging.set_readonly(0, 0, 0x1000);
    memnet::Network net(mesh);

    uint64_t old_paddr = paging.translate(0, 0, 0).paddr;
    uint64_t old_frame = old_paddr / 4096;
    REQUIRE(paging.request_migration({0, 0}, 1, 0, -1) == MigrationOutcome::QUEUED);

    bool done = false;
    bool read_outstanding = false;
    uint64_t packet_id = 0;
    for (uint64_t cycle = 0; cycle < 500 && !done; ++cycle) {
        for (const auto& d : net.step(cycle)) {
            if (d.packet.kind == memnet::PacketKind::MIGRATION_DATA) {
                if (auto dst = paging.on_migration_data_delivered(uint64_t(d.packet.op_ref))) {
                    memnet::Packet ack;
                    ack.id = packet_id++;
                    ack.kind = memnet::PacketKind::MIGRATION_ACK;
                    ack.src_cube = *dst;
                    ack.dst_cube = 0;
                    ack.payload_bits = 128;
                    ack.op_ref = d.packet.op_ref;
                    REQUIRE(net.try_inject(ack, cycle));
                }
            } else if (d.packet.kind == memnet::PacketKind::MIGRATION_ACK) {
                paging.on_migration_ack(uint64_t(d.packet.op_ref), cycle);
            }
        }
        auto step = paging.step_dma(cycle, [&](memnet::Packet& p) {
            p.id = packet_id++;
            return net.try_inject(p, cycle);
        });
        if (cycle == 40) {
            // reads during flight still see the old frame
            auto tr = paging.translate(0, 16, 0);
            CHECK(tr.status == TranslateResult::Status::OK);
            CHECK(tr.paddr / 4096 == old_frame);
            paging.note_frame_read_started(old_frame);
            read_outstanding = true;
        }
        check_conservation(paging);
        done = !step.completed.empty();
    }
    REQUIRE(done);
    // table updated, but the old frame drains until the outstanding read ends
    CHECK(frame_of(paging, {0, 0}) != old_frame);
    auto fa = paging.frame_accounting();
    CHECK(fa.draining == 1);
    REQUIRE(read_outstanding);
    paging.note_frame_read_done(old_frame);
    fa = paging.frame_accounting();
    CHECK(fa.draining == 0);
    check_conservation(paging);
}

TEST_CASE("migration aborts when the destination cube has no free frame") {
    Fixture f;  // 16 frames per cube
    // fill cube 1 completely: its pool must be empty
    PagingConfig cfg;
    cfg.policy = AllocPolicy::HOTSPOT;
    memnet::MeshConfig mesh;
    memnet::DramMapper mapper(mesh, memnet::CubeGeometry{}, 64 * 1024, 4096);
    PagingSystem paging(cfg, mapper);
    paging.declare_process(0, 1 << 24);
    for (uint64_t i = 0; i < 32; ++i) paging.translate(0, i * 4096, 0);  // fills cubes 0 and 1
    REQUIRE(paging.request_migration({0, 0}, 1, 0, -1) == MigrationOutcome::QUEUED);
    auto step = paging.step_dma(0, [](memnet::Packet&) { return true; });
    REQUIRE(step.completed.size() == 1);
    CHECK(step.completed[0].aborted);
    CHECK(paging.migrations_aborted == 1);
    CHECK(paging.cube_of_page({0, 0}) == 0);  // page unchanged
    check_conservation(paging);
}
