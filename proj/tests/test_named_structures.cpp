#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "pmkit/errors.hpp"
#include "pmkit/harness.hpp"
#include "pmkit/named_heap.hpp"
#include "pmkit/pool.hpp"
#include "pmkit/structure.hpp"
#include "pmkit/workload.hpp"
#include "test_support.hpp"

using namespace pmkit;

namespace {

PoolConfig named_config() {
  PoolConfig cfg;
  cfg.backend = Backend::named;
  cfg.pool_size = 2ull << 20;
  cfg.named_region_bytes = 512ull << 10;
  cfg.catalog_capacity = 512;
  return cfg;
}

struct Rig {
  std::unique_ptr<Pool> pool;
  std::unique_ptr<NamedSession> ns;
  LockRegistry locks;

  Rig() {
    pool = Pool::create(PersistDomain::create_sim(2ull << 20), named_config());
    ns = std::make_unique<NamedSession>(*pool);
  }

  explicit Rig(std::vector<std::byte> img) {
    pool = Pool::open(PersistDomain::open_sim(std::move(img)));
    ns = std::make_unique<NamedSession>(*pool);
  }

  PersistDomain& dom() { return pool->domain(); }
};

}  // namespace

TEST_CASE("named structures track the oracle across sessions") {
  StructKind kind = StructKind::set;
  LockMode mode = LockMode::coarse;
  SUBCASE("set coarse") {}
  SUBCASE("set fine") { mode = LockMode::fine; }
  SUBCASE("chained table") { kind = StructKind::ht_closed; }
  SUBCASE("open table") { kind = StructKind::ht_open; }

  StructConfig cfg;
  cfg.bucket_count = 8;
  cfg.capacity = 256;

  OracleState m;
  std::mt19937_64 rng(5);
  std::vector<std::byte> img;
  for (int session = 0; session < 3; ++session) {
    Rig rig = session == 0 ? Rig() : Rig(img);
    auto ds = session == 0
                  ? create_structure(*rig.ns, rig.locks, kind, mode, cfg)
                  : attach_structure(*rig.ns, rig.locks, kind, mode);
    CHECK(ds->snapshot() == oracle_items(m));
    for (int i = 0; i < 120; ++i) {
      PlannedOp op;
      std::uint64_t r = rng() % 100;
      op.kind = r < 50 ? OpKind::insert : r < 85 ? OpKind::remove : OpKind::find;
      op.key = -20 + std::int64_t(rng() % 41);
      op.value = rng();
      bool expect = oracle_apply(m, op);
      bool got = op.kind == OpKind::insert   ? ds->add(op.key, op.value)
                 : op.kind == OpKind::remove ? ds->remove(op.key)
                                             : ds->find(op.key).has_value();
      REQUIRE(got == expect);
      if (i % 16 == 0) rig.ns->checkpoint();
    }
    CHECK(harness::verify_report(*ds, *rig.pool).empty());
    rig.ns->close();
    img = rig.dom().durable_snapshot();
  }
}

TEST_CASE("attach resolves one name per node") {
  std::vector<std::byte> img;
  {
    Rig rig;
    auto ds = create_structure(*rig.ns, rig.locks, StructKind::set,
                               LockMode::coarse, {});
    for (std::int64_t k = 0; k < 3; ++k) CHECK(ds->add(k, k));
    rig.ns->close();
    img = rig.dom().durable_snapshot();
  }
  Rig back(img);
  std::uint64_t r0 = back.ns->stats().resolutions;
  auto ds = attach_structure(*back.ns, back.locks, StructKind::set,
                             LockMode::coarse);
  CHECK(back.ns->stats().resolutions - r0 == 3);  // one per surviving node
  CHECK(ds->snapshot().size() == 3);

  // An empty chain costs nothing to rebuild.
  for (std::int64_t k = 0; k < 3; ++k) CHECK(ds->remove(k));
  back.ns->close();
  Rig empty(back.dom().durable_snapshot());
  std::uint64_t r1 = empty.ns->stats().resolutions;
  (void)attach_structure(*empty.ns, empty.locks, StructKind::set,
                         LockMode::coarse);
  CHECK(empty.ns->stats().resolutions == r1);
  empty.ns->close();
}

TEST_CASE("structures publish well-known names") {
  Rig rig;

  SUBCASE("the set and its nodes") {
    auto ds = create_structure(*rig.ns, rig.locks, StructKind::set,
                               LockMode::coarse, {});
    CHECK(rig.ns->resolve("set").ref.off == rig.pool->root().off);
    CHECK(ds->add(7, 70));
    CHECK(rig.ns->has("node-1"));
    CHECK(ds->add(9, 90));
    CHECK(rig.ns->has("node-2"));
    // A node's name dies with the node; ids are never reused.
    CHECK(ds->remove(7));
    CHECK_FALSE(rig.ns->has("node-1"));
    CHECK(ds->add(11, 110));
    CHECK(rig.ns->has("node-3"));
  }

  SUBCASE("both tables answer to ht") {
    StructConfig cfg;
    cfg.capacity = 64;
    auto ds = create_structure(*rig.ns, rig.locks, StructKind::ht_open,
                               LockMode::coarse, cfg);
    NamedEntry e = rig.ns->resolve("ht");
    CHECK(e.ref.off == rig.pool->root().off);
    CHECK(e.size == 32 + 64 * 24);  // header plus one 24-byte slot per entry
  }
  rig.ns->close();
}

TEST_CASE("staged mutations vanish without a checkpoint") {
  Rig rig;
  StructConfig cfg;
  cfg.capacity = 64;
  auto ds = create_structure(*rig.ns, rig.locks, StructKind::ht_open,
                             LockMode::coarse, cfg);
  for (std::int64_t k = 0; k < 3; ++k) CHECK(ds->add(k, k + 100));
  rig.ns->checkpoint();
  for (std::int64_t k = 3; k < 5; ++k) CHECK(ds->add(k, k + 100));  // staged

  // Reopening the durable image drops everything after the checkpoint.
  Rig back(rig.dom().durable_snapshot());
  auto ds2 = attach_structure(*back.ns, back.locks, StructKind::ht_open,
                              LockMode::coarse);
  auto items = ds2->snapshot();
  REQUIRE(items.size() == 3);
  for (std::int64_t k = 0; k < 3; ++k) {
    CHECK(items[k].first == k);
    CHECK(items[k].second == std::uint64_t(k + 100));
  }
  CHECK(harness::verify_report(*ds2, *back.pool).empty());
  back.ns->close();
}

TEST_CASE("named tables reject fine-grained locking on the open variant") {
  Rig rig;
  StructConfig cfg;
  cfg.capacity = 64;
  try {
    (void)create_structure(*rig.ns, rig.locks, StructKind::ht_open,
                           LockMode::fine, cfg);
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::config);
  }
  rig.ns->close();
}

TEST_CASE("a damaged node name surfaces at attach") {
  Rig rig;
  auto ds = create_structure(*rig.ns, rig.locks, StructKind::set,
                             LockMode::coarse, {});
  CHECK(ds->add(1, 10));
  CHECK(ds->add(2, 20));
  rig.ns->close();
  auto img = rig.dom().durable_snapshot();

  // Corrupt the first node's stored successor name in the durable image:
  // resolving it must fail the chain rebuild.
  NamedEntry n1 = rig.ns->resolve("node-1");
  img[n1.ref.off + 48] = std::byte{'z'};

  Rig back(img);
  CHECK_THROWS_AS((void)attach_structure(*back.ns, back.locks, StructKind::set,
                                         LockMode::coarse),
                  Error);
}
