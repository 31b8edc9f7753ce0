#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pmkit/pool.hpp"
#include "pmkit/structure.hpp"
#include "pmkit/workload.hpp"

namespace pmkit::harness {

// Small pools keep crash materialization cheap; sweeps rebuild the durable
// image once per crash point.
struct Geometry {
  std::uint64_t pool_size = 2ull << 20;
  std::uint64_t slot_bytes = 64ull << 10;
  std::uint64_t slot_count = 8;
  std::uint64_t snapshot_unit = 4096;
  std::uint64_t named_region = 256ull << 10;
  std::uint64_t catalog_capacity = 256;
  std::uint64_t bucket_count = 8;
  std::uint64_t capacity = 256;  // open-table slots
  bool direct = false;           // sweeps refuse non-simulated pools

  PoolConfig pool_config(Backend backend) const;
  StructConfig struct_config() const;
};

struct SweepRow {
  std::uint64_t event_index = 0;
  std::int64_t adversary_seed = -1;  // -1: adversary off
  bool pass = false;
  std::string violation;
};

struct SweepReport {
  std::uint64_t events = 0;
  std::vector<SweepRow> rows;

  bool all_pass() const;
  std::uint64_t failures() const;
  void to_csv(std::ostream& out) const;
};

struct SweepOptions {
  bool adversary = false;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  bool check_idempotence = true;  // recover twice, compare durable images
};

// Runs the workload once under tracing and returns the total number of
// persistence events, pool creation included.
std::uint64_t enumerate_events(Backend backend, StructKind kind, LockMode mode,
                               const WorkloadSpec& spec,
                               const Geometry& geo = {});

// Exhaustive single-threaded crash sweep: for every event index (and
// optionally every adversary seed) materialize the crash image, recover,
// and check the recovered state against the committed-prefix oracle
// (redo/undo) or the checkpoint-boundary images (named).
SweepReport crash_sweep(Backend backend, StructKind kind, LockMode mode,
                        const WorkloadSpec& spec, const SweepOptions& opt = {},
                        const Geometry& geo = {});

// Structure invariants plus heap audit, as report entries instead of
// exceptions.
std::vector<std::string> verify_report(IStructure& ds, Pool& pool);

// Per-run numbers from a multi-run protocol; counters are deltas over the
// run's operation phase.
struct RunStats {
  std::uint32_t run = 0;
  double wall_ms = 0;
  double recovery_ms = 0;
  std::uint64_t ops_committed = 0;  // successful mutations
  std::uint64_t txns_committed = 0;
  std::uint64_t bytes_logged = 0;
  std::uint64_t name_resolutions = 0;
  DomainCounters domain;
};

struct MultiRunReport {
  std::vector<RunStats> runs;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Run 1 creates the pool and structure; runs 2..N reopen and recover, each
// run ending in a clean shutdown. The final state must match the
// committed-operations oracle accumulated across every run: exact replay
// when single-threaded, per-key success counting when concurrent.
MultiRunReport multi_run(Backend backend, StructKind kind, LockMode mode,
                         const WorkloadSpec& spec, const Geometry& geo = {});

// Concurrent runs cannot be swept exhaustively; instead a recorded
// multi-threaded redo run is cut at sampled event indexes. Every recovered
// image must verify cleanly, audit cleanly, and every surviving node must
// be reachable through freshly created locks.
struct CrashSampleReport {
  std::uint64_t events = 0;
  std::vector<SweepRow> rows;
  bool all_pass() const;
};

CrashSampleReport sampled_concurrent_crashes(StructKind kind, LockMode mode,
                                             const WorkloadSpec& spec,
                                             std::uint32_t samples,
                                             const SweepOptions& opt = {},
                                             const Geometry& geo = {});

}  // namespace pmkit::harness
