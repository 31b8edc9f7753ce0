#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <vector>

#include "pmkit/errors.hpp"
#include "pmkit/persist_domain.hpp"
#include "test_support.hpp"

using namespace pmkit;

namespace {

std::vector<std::byte> some_bytes(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::byte> v(n);
  for (auto& b : v) b = std::byte(rng() & 0xFF);
  return v;
}

// Reference model of the simulate-mode semantics: stores hit a volatile
// image, flush marks 64-byte lines, fence copies every marked line's current
// volatile content to the durable image.
struct Model {
  std::vector<std::byte> vol, dur;
  std::set<std::uint64_t> pending;

  explicit Model(std::uint64_t size) : vol(size), dur(size) {}

  void store(std::uint64_t off, std::span<const std::byte> d) {
    std::copy(d.begin(), d.end(), vol.begin() + off);
  }
  void flush(std::uint64_t off, std::uint64_t len) {
    if (len == 0) return;
    for (std::uint64_t l = off / kFlushLine; l <= (off + len - 1) / kFlushLine;
         ++l)
      pending.insert(l);
  }
  void fence() {
    for (std::uint64_t l : pending)
      std::copy_n(vol.begin() + l * kFlushLine, kFlushLine,
                  dur.begin() + l * kFlushLine);
    pending.clear();
  }
};

}  // namespace

TEST_CASE("simulate mode tracks a reference model") {
  constexpr std::uint64_t kSize = 4096;
  auto dom = PersistDomain::create_sim(kSize);
  Model model(kSize);
  std::mt19937_64 rng(7);

  REQUIRE(dom->simulated());
  REQUIRE(dom->size() == kSize);

  for (int i = 0; i < 3000; ++i) {
    switch (rng() % 10) {
      case 0:
      case 1:
      case 2:
      case 3:
      case 4: {  // store
        std::uint64_t len = 1 + rng() % 128;
        std::uint64_t off = rng() % (kSize - len);
        auto data = some_bytes(rng, len);
        dom->store(off, data);
        model.store(off, data);
        break;
      }
      case 5:
      case 6:
      case 7: {  // flush
        std::uint64_t len = rng() % 256;
        std::uint64_t off = rng() % (kSize - std::max<std::uint64_t>(len, 1));
        dom->flush(off, len);
        model.flush(off, len);
        break;
      }
      default:
        dom->fence();
        model.fence();
    }
    if (i % 64 == 0) CHECK(dom->durable_snapshot() == model.dur);
  }
  dom->fence();
  model.fence();
  CHECK(dom->durable_snapshot() == model.dur);

  // Nothing pending after a fence: another fence changes nothing.
  auto before = dom->durable_snapshot();
  dom->fence();
  CHECK(dom->durable_snapshot() == before);
}

TEST_CASE("events are numbered from 1 and count flushes and fences") {
  auto dom = PersistDomain::create_sim(1024);
  CHECK(dom->event_count() == 0);
  CHECK(dom->flush(0, 8) == 1);
  CHECK(dom->fence() == 2);
  CHECK(dom->flush(64, 0) == 3);  // zero-length flush is still an event
  CHECK(dom->event_count() == 3);

  DomainCounters c = dom->counters();
  CHECK(c.flush_calls == 2);
  CHECK(c.fence_calls == 1);
  CHECK(c.bytes_flushed == 64);  // one line; the empty flush marked none
}

TEST_CASE("flush line accounting is by touched 64-byte lines") {
  auto dom = PersistDomain::create_sim(1024);
  dom->flush(60, 8);  // straddles two lines
  CHECK(dom->counters().bytes_flushed == 128);
  dom->flush(64, 64);  // exactly one line
  CHECK(dom->counters().bytes_flushed == 192);
}

TEST_CASE("store is bounds checked") {
  auto dom = PersistDomain::create_sim(256);
  std::byte b[16] = {};
  CHECK_THROWS_AS(dom->store(248, b), Error);
  CHECK_THROWS_AS(dom->flush(256, 1), Error);
  try {
    dom->store(300, b);
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::range);
  }
}

TEST_CASE("crash materialization replays the trace exactly") {
  // The model is stepped alongside the domain; after every event we remember
  // the model's durable image and the pending-line set, then compare every
  // materialized crash image against them.
  constexpr std::uint64_t kSize = 2048;
  auto dom = PersistDomain::create_sim(kSize);
  dom->set_tracing(true);
  Model model(kSize);
  std::mt19937_64 rng(11);

  std::vector<std::vector<std::byte>> dur_at{model.dur};
  std::vector<std::vector<std::byte>> vol_at{model.vol};
  std::vector<std::set<std::uint64_t>> pending_at{model.pending};
  auto snap = [&] {
    dur_at.push_back(model.dur);
    vol_at.push_back(model.vol);
    pending_at.push_back(model.pending);
  };

  for (int i = 0; i < 400; ++i) {
    switch (rng() % 8) {
      case 0:
      case 1:
      case 2: {
        std::uint64_t len = 1 + rng() % 96;
        std::uint64_t off = rng() % (kSize - len);
        auto data = some_bytes(rng, len);
        dom->store(off, data);
        model.store(off, data);
        break;
      }
      case 3:
      case 4:
      case 5: {
        std::uint64_t len = 1 + rng() % 160;
        std::uint64_t off = rng() % (kSize - len);
        dom->flush(off, len);
        model.flush(off, len);
        snap();
        break;
      }
      default:
        dom->fence();
        model.fence();
        snap();
    }
  }
  REQUIRE(dom->event_count() + 1 == dur_at.size());

  SUBCASE("without the adversary, unfenced lines never survive") {
    for (std::uint64_t k = 0; k <= dom->event_count(); k += 3)
      CHECK(dom->materialize_crash(k) == dur_at[k]);
  }

  SUBCASE("the adversary keeps only flushed-but-unfenced lines") {
    for (std::uint64_t k = 1; k <= dom->event_count(); k += 7) {
      for (std::uint64_t seed : {0ull, 1ull, 42ull}) {
        auto img = dom->materialize_crash(k, seed);
        REQUIRE(img.size() == kSize);
        for (std::uint64_t line = 0; line < kSize / kFlushLine; ++line) {
          std::uint64_t off = line * kFlushLine;
          bool as_durable = std::memcmp(img.data() + off,
                                        dur_at[k].data() + off, kFlushLine) == 0;
          if (as_durable) continue;
          // Any divergence must be a pending line holding its volatile bytes.
          CHECK(pending_at[k].contains(line));
          CHECK(std::memcmp(img.data() + off, vol_at[k].data() + off,
                            kFlushLine) == 0);
        }
      }
    }
  }

  SUBCASE("same crash point and seed give a byte-identical image") {
    std::uint64_t k = dom->event_count() / 2;
    CHECK(dom->materialize_crash(k, 9) == dom->materialize_crash(k, 9));
    CHECK(dom->materialize_crash(k) == dom->materialize_crash(k));
  }

  SUBCASE("an index past the trace is refused") {
    try {
      (void)dom->materialize_crash(dom->event_count() + 1);
      FAIL("unreachable");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::trace_exhausted);
    }
  }
}

TEST_CASE("tracing guards") {
  // Fresh sim domains come up tracing, so the off state has to be asked for.
  auto dom = PersistDomain::create_sim(256);

  SUBCASE("materialization needs tracing") {
    dom->set_tracing(false);
    CHECK_THROWS_AS((void)dom->materialize_crash(0), Error);
    try {
      (void)dom->materialize_crash(0);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::state);
    }
  }

  SUBCASE("tracing cannot start with lines in flight") {
    dom->set_tracing(false);
    std::byte b[8] = {};
    dom->store(0, b);
    dom->flush(0, 8);
    CHECK_THROWS_AS(dom->set_tracing(true), Error);
    dom->fence();
    dom->set_tracing(true);  // fine now
  }

  SUBCASE("crash points before the trace began are refused") {
    std::byte b[8] = {};
    dom->store(0, b);
    dom->flush(0, 8);
    dom->fence();  // events 1, 2
    dom->set_tracing(false);
    dom->set_tracing(true);  // restarts the window at event 2
    dom->flush(0, 8);
    dom->fence();  // events 3, 4
    CHECK_THROWS_AS((void)dom->materialize_crash(1), Error);
    try {
      (void)dom->materialize_crash(1);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::trace_exhausted);
    }
    CHECK(dom->materialize_crash(3).size() == 256);
  }
}

TEST_CASE("open_sim adopts an image as the durable baseline") {
  auto dom = PersistDomain::create_sim(512);
  std::byte b[8] = {std::byte{0xAB}};
  dom->store(64, b);
  dom->flush(64, 8);
  dom->fence();
  auto img = dom->durable_snapshot();

  auto dom2 = PersistDomain::open_sim(img);
  CHECK(dom2->size() == 512);
  CHECK(dom2->load_u64(64) == dom->load_u64(64));
  CHECK(dom2->durable_snapshot() == img);
}

TEST_CASE("direct mode persists through the file") {
  test::TempFile f("pmkit-direct");
  {
    auto dom = PersistDomain::create_direct(f.path(), 4096);
    CHECK_FALSE(dom->simulated());
    dom->store_u64(128, 0xDEADBEEFCAFEull);
    dom->flush(128, 8);
    dom->fence();
    CHECK_THROWS_AS(dom->set_tracing(true), Error);
    CHECK_THROWS_AS((void)dom->durable_snapshot(), Error);
    CHECK_THROWS_AS((void)dom->materialize_crash(0), Error);
  }
  {
    auto dom = PersistDomain::open_direct(f.path());
    CHECK(dom->size() == 4096);
    CHECK(dom->load_u64(128) == 0xDEADBEEFCAFEull);
  }
}

TEST_CASE("direct mode refuses damaged files") {
  test::TempFile f("pmkit-direct-bad");
  {
    std::ofstream out(f.path(), std::ios::binary);
    out << "short";
  }
  CHECK_THROWS_AS((void)PersistDomain::open_direct(f.path()), Error);
  CHECK_THROWS_AS((void)PersistDomain::open_direct("/nonexistent/nope"), Error);
}

TEST_CASE("domain size must be a positive multiple of the flush line") {
  CHECK_THROWS_AS((void)PersistDomain::create_sim(0), Error);
  CHECK_THROWS_AS((void)PersistDomain::create_sim(100), Error);
}
