#include <doctest.h>

#include <atomic>
#include <cstring>
#include <set>
#include <thread>
#include <vector>

#include "pmkit/errors.hpp"
#include "pmkit/layout.hpp"
#include "pmkit/pool.hpp"
#include "pmkit/redo_log.hpp"
#include "test_support.hpp"

using namespace pmkit;
namespace L = layout;

namespace {

PoolConfig redo_config(std::uint64_t slots = 8) {
  PoolConfig cfg;
  cfg.backend = Backend::redo;
  cfg.pool_size = 4ull << 20;
  cfg.slot_bytes = 32ull << 10;
  cfg.slot_count = slots;
  return cfg;
}

struct Rig {
  std::unique_ptr<Pool> pool;
  std::unique_ptr<RedoEngine> eng;
  PRef obj;

  explicit Rig(std::uint64_t slots = 8, bool tracing = false) {
    auto dom = PersistDomain::create_sim(4ull << 20);
    if (tracing) dom->set_tracing(true);
    pool = Pool::create(std::move(dom), redo_config(slots));
    eng = std::make_unique<RedoEngine>(*pool);
    RedoTxn t = eng->begin();
    obj = pool->alloc(256, t.writer());
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

TEST_CASE("redo bytes_logged follows the record formula exactly") {
  // Per transaction: sum of (payload + 16-byte record header), plus the
  // 24-byte commit marker.
  Rig rig;
  std::uint64_t base = rig.eng->counters().bytes_logged;

  RedoTxn t = rig.eng->begin();
  t.write(rig.obj.off, word8(1));
  std::vector<std::byte> big(100, std::byte{7});
  t.write(rig.obj.off + 64, big);
  t.commit();

  CHECK(rig.eng->counters().bytes_logged - base ==
        (8 + 16) + (100 + 16) + 24);
  CHECK(rig.eng->counters().txns_committed == 2);  // setup txn plus this one

  SUBCASE("an aborted transaction logs nothing") {
    std::uint64_t before = rig.eng->counters().bytes_logged;
    RedoTxn a = rig.eng->begin();
    a.write(rig.obj.off, word8(9));
    a.abort();
    CHECK(rig.eng->counters().bytes_logged == before);
    CHECK(rig.eng->counters().txns_aborted == 1);
  }
}

TEST_CASE("transaction writes are read-your-writes but not durable early") {
  Rig rig;
  RedoTxn t = rig.eng->begin();
  t.write(rig.obj.off, word8(0x1122334455667788ull));

  // Volatile image sees it immediately; the durable image must not until
  // commit finishes.
  CHECK(rig.dom().load_u64(rig.obj.off) == 0x1122334455667788ull);
  auto durable = rig.dom().durable_snapshot();
  std::uint64_t home;
  std::memcpy(&home, durable.data() + rig.obj.off, 8);
  CHECK(home == 0);

  t.commit();
  durable = rig.dom().durable_snapshot();
  std::memcpy(&home, durable.data() + rig.obj.off, 8);
  CHECK(home == 0x1122334455667788ull);
}

TEST_CASE("abort restores the volatile image") {
  Rig rig;
  {
    RedoTxn t = rig.eng->begin();
    t.write(rig.obj.off, word8(42));
    t.commit();
  }
  RedoTxn t = rig.eng->begin();
  t.write(rig.obj.off, word8(77));
  CHECK(rig.dom().load_u64(rig.obj.off) == 77);
  t.abort();
  CHECK(rig.dom().load_u64(rig.obj.off) == 42);

  SUBCASE("dropping an open transaction aborts it too") {
    {
      RedoTxn d = rig.eng->begin();
      d.write(rig.obj.off, word8(99));
    }
    CHECK(rig.dom().load_u64(rig.obj.off) == 42);
    rig.eng->close();  // all slots free again
  }
}

TEST_CASE("nested begin on one thread is refused") {
  Rig rig;
  RedoTxn t = rig.eng->begin();
  try {
    (void)rig.eng->begin();
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::nesting);
  }
  t.commit();
  RedoTxn t2 = rig.eng->begin();  // fine after the first one finished
  t2.commit();
}

TEST_CASE("a closed transaction refuses further use") {
  Rig rig;
  RedoTxn t = rig.eng->begin();
  t.commit();
  CHECK_FALSE(t.open());
  CHECK_THROWS_AS(t.write(rig.obj.off, word8(1)), Error);
  CHECK_THROWS_AS(t.commit(), Error);
  CHECK_THROWS_AS(t.abort(), Error);
}

TEST_CASE("writes are bounds checked against the object space") {
  Rig rig;
  RedoTxn t = rig.eng->begin();
  std::uint64_t log = rig.pool->log_region();
  CHECK_THROWS_AS(t.write(log, word8(1)), Error);
  CHECK_THROWS_AS(t.write(log - 4, word8(1)), Error);
  t.abort();
}

TEST_CASE("slot overflow aborts the transaction") {
  Rig rig;
  auto heap_before = rig.pool->audit();
  RedoTxn t = rig.eng->begin();
  PRef big = rig.pool->alloc(8192, t.writer());
  std::vector<std::byte> chunk(4096, std::byte{5});
  try {
    for (int i = 0; i < 100; ++i) t.write(big.off, chunk);
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::out_of_log);
  }
  CHECK_FALSE(t.open());
  // Everything rolled back, the in-transaction allocation included.
  auto heap_after = rig.pool->audit();
  CHECK(heap_after.live_blocks == heap_before.live_blocks);
  CHECK(heap_after.free_bytes == heap_before.free_bytes);
  rig.eng->close();
}

TEST_CASE("every slot held leaves begin with nowhere to go") {
  Rig rig(2);
  RedoTxn a = rig.eng->begin();
  std::thread other([&] {
    RedoTxn b = rig.eng->begin();
    try {
      (void)rig.eng->begin();  // would nest on this thread anyway, but the
      FAIL("unreachable");     // slot pool is dry first
    } catch (const Error&) {
    }
    std::thread third([&] {
      try {
        (void)rig.eng->begin();
        FAIL("unreachable");
      } catch (const Error& e) {
        CHECK(e.code() == Errc::out_of_log);
      }
    });
    third.join();
    b.abort();
  });
  other.join();
  a.abort();
}

TEST_CASE("fifty threads get fifty distinct slots") {
  auto pool =
      Pool::create(PersistDomain::create_sim(8ull << 20), [] {
        PoolConfig c;
        c.backend = Backend::redo;
        c.pool_size = 8ull << 20;
        c.slot_bytes = 64ull << 10;
        c.slot_count = 50;
        return c;
      }());
  RedoEngine eng(*pool);

  std::vector<std::thread> threads;
  std::atomic<int> arrived{0};
  std::atomic<bool> release{false};
  for (int i = 0; i < 50; ++i) {
    threads.emplace_back([&] {
      RedoTxn t = eng.begin();
      arrived.fetch_add(1);
      while (!release.load()) std::this_thread::yield();
      t.commit();
    });
  }
  while (arrived.load() < 50) std::this_thread::yield();
  // All 50 transactions are parked open: every slot header must carry a
  // distinct live transaction id.
  std::set<std::uint64_t> ids;
  for (std::uint64_t s = 0; s < 50; ++s) {
    std::uint64_t off = pool->log_region() + s * pool->slot_bytes();
    std::uint64_t id = pool->domain().load_u64(off);
    CHECK(id != 0);
    ids.insert(id);
  }
  CHECK(ids.size() == 50);
  release.store(true);
  for (auto& th : threads) th.join();
  eng.close();
}

TEST_CASE("recovery replays a committed but unwritten-back transaction") {
  Rig rig(8, true);
  std::uint64_t e0;
  {
    RedoTxn t = rig.eng->begin();
    t.write(rig.obj.off, word8(0xABCDull));
    e0 = rig.dom().event_count();
    t.commit();
  }
  // commit path: fence, marker flush, fence  <- commit point at e0 + 3
  auto img = rig.dom().materialize_crash(e0 + 3);
  auto pool = Pool::open(PersistDomain::open_sim(img));
  RedoEngine eng(*pool);
  CHECK(eng.recovery().replayed == 1);
  CHECK(eng.recovery().discarded == 0);
  CHECK(pool->domain().load_u64(rig.obj.off) == 0xABCD);
}

TEST_CASE("recovery discards a transaction without a durable marker") {
  Rig rig(8, true);
  std::uint64_t e0;
  {
    RedoTxn t = rig.eng->begin();
    t.write(rig.obj.off, word8(0xABCDull));
    e0 = rig.dom().event_count();
    t.commit();
  }
  // Marker flushed at e0 + 2 but the commit fence never ran: without the
  // adversary the marker line dies with the cache.
  auto img = rig.dom().materialize_crash(e0 + 2);
  auto pool = Pool::open(PersistDomain::open_sim(img));
  RedoEngine eng(*pool);
  CHECK(eng.recovery().replayed == 0);
  CHECK(eng.recovery().discarded == 1);
  CHECK(pool->domain().load_u64(rig.obj.off) == 0);

  SUBCASE("recovery is idempotent") {
    auto once = pool->domain().durable_snapshot();
    auto pool2 = Pool::open(PersistDomain::open_sim(once));
    RedoEngine eng2(*pool2);
    CHECK(eng2.recovery().replayed == 0);
    CHECK(eng2.recovery().discarded == 0);
    CHECK(pool2->domain().durable_snapshot() == once);
  }
}

TEST_CASE("a corrupt record body discards the transaction at recovery") {
  Rig rig(8, true);
  std::uint64_t e0;
  {
    RedoTxn t = rig.eng->begin();
    t.write(rig.obj.off, word8(0xEEEEull));
    e0 = rig.dom().event_count();
    t.commit();
  }
  auto img = rig.dom().materialize_crash(e0 + 3);  // marker durable

  // Flip one payload byte inside the first record. Single-threaded use
  // always lands in slot 0.
  std::uint64_t slot_off = rig.pool->log_region();
  img[slot_off + L::kRedoSlotHeader + L::kRecordHeader] ^= std::byte{0xFF};

  auto pool = Pool::open(PersistDomain::open_sim(img));
  RedoEngine eng(*pool);
  CHECK(eng.recovery().replayed == 0);
  CHECK(eng.recovery().discarded == 1);
  CHECK(pool->domain().load_u64(rig.obj.off) == 0);
}

TEST_CASE("close marks a clean shutdown and open transactions block it") {
  Rig rig;
  CHECK_FALSE(rig.pool->clean_shutdown());  // first begin dirtied it

  RedoTxn t = rig.eng->begin();
  CHECK_THROWS_AS(rig.eng->close(), Error);
  t.commit();
  rig.eng->close();
  CHECK(rig.pool->clean_shutdown());

  auto img = rig.dom().durable_snapshot();
  auto pool = Pool::open(PersistDomain::open_sim(img));
  CHECK(pool->clean_shutdown());
  RedoEngine eng(*pool);
  CHECK(eng.recovery().replayed == 0);
  CHECK(eng.recovery().discarded == 0);
}

TEST_CASE("the engine refuses a mismatched pool") {
  auto pool = Pool::create(PersistDomain::create_sim(4ull << 20), [] {
    PoolConfig c;
    c.backend = Backend::undo;
    c.pool_size = 4ull << 20;
    c.slot_bytes = 32ull << 10;
    c.slot_count = 8;
    return c;
  }());
  CHECK_THROWS_AS((void)RedoEngine(*pool), Error);
}
