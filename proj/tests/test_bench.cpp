#include <doctest.h>

#include <fstream>
#include <sstream>
#include <string>

#include "pmkit/bench.hpp"
#include "pmkit/errors.hpp"
#include "test_support.hpp"

using namespace pmkit;
using namespace pmkit::bench;

namespace {

harness::Geometry small_geometry() {
  harness::Geometry g;
  g.pool_size = 4ull << 20;
  g.slot_bytes = 64ull << 10;
  g.slot_count = 16;
  g.named_region = 512ull << 10;
  g.catalog_capacity = 512;
  return g;
}

BenchConfig small_config(Backend b, std::uint32_t runs = 2) {
  BenchConfig cfg;
  cfg.backend = b;
  cfg.geometry = small_geometry();
  cfg.spec.threads = 2;
  cfg.spec.ops_per_thread = 60;
  cfg.spec.key_lo = 0;
  cfg.spec.key_hi = 127;
  cfg.spec.seed = 9;
  cfg.spec.runs = runs;
  return cfg;
}

std::string emit_to_string(const std::vector<StatsRow>& rows) {
  std::ostringstream out;
  emit_stats(rows, out);
  return out.str();
}

}  // namespace

TEST_CASE("stats survive an emit and parse round trip") {
  BenchResult res = run_bench(small_config(Backend::redo));
  REQUIRE(res.ok());
  REQUIRE(res.rows.size() == 2);

  std::string csv = emit_to_string(res.rows);
  std::istringstream in(csv);
  auto parsed = parse_stats(in);
  REQUIRE(parsed.size() == 2);
  CHECK(emit_to_string(parsed) == csv);
  CHECK(parsed[0].run == 1);
  CHECK(parsed[1].run == 2);
  CHECK(parsed[0].backend == Backend::redo);
  CHECK(parsed[0].simulate);
  CHECK(parsed[0].ops_committed == res.rows[0].ops_committed);
  CHECK(parsed[1].bytes_logged == res.rows[1].bytes_logged);
}

TEST_CASE("appended emissions keep a single header") {
  test::TempFile out("bench-stats");
  BenchResult res = run_bench(small_config(Backend::redo));
  REQUIRE(res.ok());

  emit_stats(res.rows, out.path(), false);
  emit_stats(res.rows, out.path(), true);

  std::ifstream in(out.path());
  auto parsed = parse_stats(in);
  CHECK(parsed.size() == 4);

  std::ifstream count(out.path());
  std::string line;
  int headers = 0;
  while (std::getline(count, line))
    if (line.rfind("run,", 0) == 0) headers += 1;
  CHECK(headers == 1);
}

TEST_CASE("parsing rejects foreign input") {
  SUBCASE("wrong header") {
    std::istringstream in("time,score\n1,2\n");
    CHECK_THROWS_AS((void)parse_stats(in), Error);
  }
  SUBCASE("short row") {
    std::istringstream in(
        "run,backend,ds,mode,wall_ms,ops_committed,flush_calls,fence_calls,"
        "bytes_flushed,bytes_logged,recovery_ms,name_resolutions,sim\n"
        "1,redo,set\n");
    CHECK_THROWS_AS((void)parse_stats(in), Error);
  }
}

TEST_CASE("flushed bytes dominate logged bytes on both logging backends") {
  for (Backend b : {Backend::redo, Backend::undo}) {
    BenchResult res = run_bench(small_config(b));
    REQUIRE(res.ok());
    for (const StatsRow& r : res.rows) {
      CHECK(r.bytes_flushed >= r.bytes_logged);
      CHECK(r.bytes_logged > 0);
      CHECK(r.flush_calls > 0);
      CHECK(r.fence_calls > 0);
    }
  }
}

TEST_CASE("undo flushes more than redo for the same workload") {
  BenchResult redo = run_bench(small_config(Backend::redo, 1));
  BenchResult undo = run_bench(small_config(Backend::undo, 1));
  REQUIRE(redo.ok());
  REQUIRE(undo.ok());
  CHECK(undo.rows[0].bytes_flushed > redo.rows[0].bytes_flushed);
}

TEST_CASE("a zero-op run still reports") {
  BenchConfig cfg = small_config(Backend::named, 1);
  cfg.spec.threads = 1;
  cfg.spec.ops_per_thread = 0;
  BenchResult res = run_bench(cfg);
  REQUIRE(res.ok());
  REQUIRE(res.rows.size() == 1);
  CHECK(res.rows[0].ops_committed == 0);
  CHECK(res.rows[0].wall_ms >= 0);
}

TEST_CASE("direct mode runs against a real file") {
  test::TempFile pool("bench-pool");
  BenchConfig cfg = small_config(Backend::redo);
  cfg.simulate = false;
  cfg.pool_path = pool.path();

  BenchResult res = run_bench(cfg);
  REQUIRE(res.ok());
  REQUIRE(res.rows.size() == 2);
  for (const StatsRow& r : res.rows) {
    CHECK_FALSE(r.simulate);
    CHECK(r.ops_committed > 0);
    CHECK(r.recovery_ms >= 0);
  }
  // Run 2 recovered run 1's file rather than recreating it.
  CHECK(res.rows[1].run == 2);

  std::string csv = emit_to_string(res.rows);
  CHECK(csv.find(",direct\n") != std::string::npos);
  std::istringstream in(csv);
  auto parsed = parse_stats(in);
  CHECK_FALSE(parsed[0].simulate);
}

TEST_CASE("direct mode needs a path") {
  BenchConfig cfg = small_config(Backend::redo);
  cfg.simulate = false;
  try {
    (void)run_bench(cfg);
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::config);
  }
}
