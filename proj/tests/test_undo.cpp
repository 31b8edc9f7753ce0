#include <doctest.h>

#include <cstring>
#include <vector>

#include "pmkit/errors.hpp"
#include "pmkit/layout.hpp"
#include "pmkit/pool.hpp"
#include "pmkit/undo_log.hpp"
#include "test_support.hpp"

using namespace pmkit;
namespace L = layout;

namespace {

PoolConfig undo_config(std::uint64_t unit) {
  PoolConfig cfg;
  cfg.backend = Backend::undo;
  cfg.pool_size = 4ull << 20;
  cfg.slot_bytes = 64ull << 10;
  cfg.slot_count = 8;
  cfg.snapshot_unit = unit;
  return cfg;
}

struct Rig {
  std::unique_ptr<Pool> pool;
  std::unique_ptr<UndoEngine> eng;
  PRef obj;

  explicit Rig(std::uint64_t unit = 4096, bool tracing = false) {
    auto dom = PersistDomain::create_sim(4ull << 20);
    if (tracing) dom->set_tracing(true);
    pool = Pool::create(std::move(dom), undo_config(unit));
    eng = std::make_unique<UndoEngine>(*pool);
    UndoTxn t = eng->begin();
    obj = pool->alloc(8192, t.writer());
    t.commit();
  }

  PersistDomain& dom() { return pool->domain(); }
};

// Always 8 bytes; unqualified bytes_of(1) would deduce a 4-byte int span.
std::vector<std::byte> word8(std::uint64_t v) {
  std::vector<std::byte> b(8);
  std::memcpy(b.data(), &v, 8);
  return b;
}

}  // namespace

TEST_CASE("undo logs one pre-image per touched unit, first touch only") {
  Rig rig(4096);
  std::uint64_t base = rig.eng->counters().bytes_logged;

  UndoTxn t = rig.eng->begin();
  t.write(rig.obj.off, word8(1));
  CHECK(rig.eng->counters().bytes_logged == base);  // counted at commit
  t.write(rig.obj.off + 8, word8(2));  // same unit, no new record
  t.commit();
  CHECK(rig.eng->counters().bytes_logged - base == (4096 + 16) + 24);

  SUBCASE("a write spanning two units snapshots both") {
    base = rig.eng->counters().bytes_logged;
    UndoTxn s = rig.eng->begin();
    // obj payload starts mid-page; pick an offset crossing the next page
    // boundary inside the allocation.
    std::uint64_t page_end = (rig.obj.off / 4096 + 1) * 4096;
    std::vector<std::byte> sixteen(16, std::byte{9});
    s.write(page_end - 8, sixteen);
    s.commit();
    CHECK(rig.eng->counters().bytes_logged - base == 2 * (4096 + 16) + 24);
  }
}

TEST_CASE("the 64-byte unit isolates granularity as the only variable") {
  Rig rig(64);
  std::uint64_t base = rig.eng->counters().bytes_logged;
  UndoTxn t = rig.eng->begin();
  t.write(rig.obj.off, word8(1));       // one fresh line
  t.write(rig.obj.off + 2, word8(2));   // same line
  t.write(rig.obj.off + 64, word8(3));  // next line
  t.commit();
  CHECK(rig.eng->counters().bytes_logged - base == 2 * (64 + 16) + 24);
}

TEST_CASE("in-place stores are visible before commit and roll back on abort") {
  Rig rig(256);
  {
    UndoTxn t = rig.eng->begin();
    t.write(rig.obj.off, word8(0xAAull));
    t.commit();
  }
  UndoTxn t = rig.eng->begin();
  t.write(rig.obj.off, word8(0xBBull));
  CHECK(rig.dom().load_u64(rig.obj.off) == 0xBB);
  t.abort();
  CHECK(rig.dom().load_u64(rig.obj.off) == 0xAA);

  // Rollback is durable, not just volatile.
  std::uint64_t home;
  auto durable = rig.dom().durable_snapshot();
  std::memcpy(&home, durable.data() + rig.obj.off, 8);
  CHECK(home == 0xAA);
}

TEST_CASE("crash before the marker rolls the transaction back") {
  Rig rig(4096, true);
  {
    UndoTxn t = rig.eng->begin();
    t.write(rig.obj.off, word8(0x11ull));
    t.commit();
  }
  std::uint64_t e0;
  {
    UndoTxn t = rig.eng->begin();
    t.write(rig.obj.off, word8(0x22ull));
    e0 = rig.dom().event_count();
    t.commit();
  }

  SUBCASE("before the commit fence the in-place store may be durable") {
    // e0 + 1 is the pre-marker fence: home bytes durable, marker not.
    auto img = rig.dom().materialize_crash(e0 + 1);
    auto pool = Pool::open(PersistDomain::open_sim(img));
    UndoEngine eng(*pool);
    CHECK(eng.recovery().discarded == 1);
    CHECK(pool->domain().load_u64(rig.obj.off) == 0x11);  // rolled back
  }

  SUBCASE("after the marker fence the transaction survives") {
    // fence, marker flush, fence: e0 + 3 is the commit point.
    auto img = rig.dom().materialize_crash(e0 + 3);
    auto pool = Pool::open(PersistDomain::open_sim(img));
    UndoEngine eng(*pool);
    CHECK(eng.recovery().replayed == 1);
    CHECK(eng.recovery().discarded == 0);
    CHECK(pool->domain().load_u64(rig.obj.off) == 0x22);
  }

  SUBCASE("recovery after rollback is idempotent") {
    auto img = rig.dom().materialize_crash(e0 + 1);
    auto pool = Pool::open(PersistDomain::open_sim(img));
    UndoEngine eng(*pool);
    auto once = pool->domain().durable_snapshot();
    auto pool2 = Pool::open(PersistDomain::open_sim(once));
    UndoEngine eng2(*pool2);
    CHECK(eng2.recovery().replayed == 0);
    CHECK(eng2.recovery().discarded == 0);
    CHECK(pool2->domain().durable_snapshot() == once);
  }
}

TEST_CASE("a corrupt snapshot inside the durable window refuses the pool") {
  Rig rig(4096, true);
  std::uint64_t e0;
  {
    UndoTxn t = rig.eng->begin();
    t.write(rig.obj.off, word8(0x33ull));
    e0 = rig.dom().event_count();
    t.commit();
  }
  // Crash with the record window durable but no marker; then damage the
  // snapshot payload. Recovery must refuse rather than roll back garbage.
  auto img = rig.dom().materialize_crash(e0 + 1);
  std::uint64_t slot_off = rig.pool->log_region();
  img[slot_off + L::kUndoSlotHeader + L::kRecordHeader + 100] ^= std::byte{0x5A};

  auto pool = Pool::open(PersistDomain::open_sim(img));
  try {
    UndoEngine eng(*pool);
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::corruption);
  }
}

TEST_CASE("a torn record past the durable window is not corruption") {
  Rig rig(4096, true);
  UndoTxn t = rig.eng->begin();
  t.write(rig.obj.off, word8(0x44ull));
  std::uint64_t e_before = rig.dom().event_count();
  t.write(rig.obj.off + 4096, word8(0x55ull));

  // e_before + 1 is the second snapshot record's flush: the record is in
  // flight but the durable-length field still covers only the first unit.
  auto img = rig.dom().materialize_crash(e_before + 1);
  auto pool = Pool::open(PersistDomain::open_sim(img));
  UndoEngine eng(*pool);
  CHECK(eng.recovery().discarded == 1);
  CHECK(pool->domain().load_u64(rig.obj.off) == 0);
  t.abort();
}

TEST_CASE("undo slot overflow rolls back and raises") {
  Rig rig(4096);
  auto heap_before = rig.pool->audit();
  UndoTxn t = rig.eng->begin();
  try {
    // Zeroing an 80-page allocation wants 80 snapshot records; the 64 KiB
    // slot holds 15. Echoes the memory-overhead trap of page-grain logging.
    (void)rig.pool->alloc(80 * 4096, t.writer());
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::out_of_log);
  }
  CHECK_FALSE(t.open());
  auto heap_after = rig.pool->audit();
  CHECK(heap_after.live_blocks == heap_before.live_blocks);
  CHECK(heap_after.free_bytes == heap_before.free_bytes);
  rig.eng->close();
}

TEST_CASE("undo nesting and backend mismatch guards") {
  Rig rig;
  UndoTxn t = rig.eng->begin();
  try {
    (void)rig.eng->begin();
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::nesting);
  }
  t.abort();

  auto pool = Pool::create(PersistDomain::create_sim(4ull << 20), [] {
    PoolConfig c;
    c.backend = Backend::redo;
    c.pool_size = 4ull << 20;
    c.slot_bytes = 32ull << 10;
    c.slot_count = 8;
    return c;
  }());
  CHECK_THROWS_AS((void)UndoEngine(*pool), Error);
}
