#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "pmkit/errors.hpp"

namespace pmkit {

enum class OpKind : std::uint8_t { insert, remove, find };

struct WorkloadSpec {
  std::uint32_t threads = 1;
  std::uint32_t ops_per_thread = 20;
  std::uint32_t insert_pct = 50;
  std::uint32_t delete_pct = 40;
  std::uint32_t find_pct = 10;
  std::int64_t key_lo = 0;
  std::int64_t key_hi = 1023;
  std::uint64_t seed = 1;
  std::uint32_t runs = 1;

  void validate() const {
    if (insert_pct + delete_pct + find_pct != 100)
      raise(Errc::config, "operation mix must sum to 100");
    if (key_lo > key_hi) raise(Errc::config, "empty key range");
    if (key_lo == INT64_MIN || key_hi == INT64_MAX)
      raise(Errc::config, "key range collides with the sentinels");
    if (runs == 0) raise(Errc::config, "need at least one run");
  }
};

struct PlannedOp {
  OpKind kind;
  std::int64_t key;
  std::uint64_t value;
};

// Deterministic per (seed, thread, run): the same spec always yields the
// same per-thread op sequence, whatever the scheduling.
class OpStream {
 public:
  OpStream(const WorkloadSpec& spec, std::uint32_t thread, std::uint32_t run)
      : spec_(spec), thread_(thread), run_(run),
        rng_(mix(spec.seed, thread, run)) {}

  PlannedOp next() {
    PlannedOp op;
    std::uint64_t r = rng_() % 100;
    if (r < spec_.insert_pct)
      op.kind = OpKind::insert;
    else if (r < spec_.insert_pct + spec_.delete_pct)
      op.kind = OpKind::remove;
    else
      op.kind = OpKind::find;
    std::uint64_t span =
        static_cast<std::uint64_t>(spec_.key_hi - spec_.key_lo) + 1;
    op.key = spec_.key_lo + static_cast<std::int64_t>(rng_() % span);
    op.value = (static_cast<std::uint64_t>(thread_) << 48) |
               (static_cast<std::uint64_t>(run_) << 32) | count_++;
    return op;
  }

 private:
  static std::uint64_t mix(std::uint64_t seed, std::uint32_t thread,
                           std::uint32_t run) {
    std::uint64_t x = seed ^ (std::uint64_t(thread) + 1) * 0x9E3779B97F4A7C15ull
                      ^ (std::uint64_t(run) + 1) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 30)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  WorkloadSpec spec_;
  std::uint32_t thread_;
  std::uint32_t run_;
  std::mt19937_64 rng_;
  std::uint32_t count_ = 0;
};

// One completed structure operation with its persistence-event window.
struct OpRecord {
  std::uint32_t thread = 0;
  OpKind kind = OpKind::find;
  std::int64_t key = 0;
  std::uint64_t value = 0;
  bool result = false;
  bool acked = false;
  std::uint64_t start_event = 0;  // event count when the op began
  std::uint64_t ack_event = 0;    // event count when it returned
};
using OpTrace = std::vector<OpRecord>;

using OracleState = std::map<std::int64_t, std::uint64_t>;

// Applies one op to the oracle and returns the result the structure should
// have produced.
inline bool oracle_apply(OracleState& m, const PlannedOp& op) {
  switch (op.kind) {
    case OpKind::insert:
      return m.emplace(op.key, op.value).second;
    case OpKind::remove:
      return m.erase(op.key) != 0;
    case OpKind::find:
      return m.count(op.key) != 0;
  }
  return false;
}

inline std::vector<std::pair<std::int64_t, std::uint64_t>> oracle_items(
    const OracleState& m) {
  return {m.begin(), m.end()};
}

}  // namespace pmkit
