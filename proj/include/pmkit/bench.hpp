#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pmkit/harness.hpp"
#include "pmkit/workload.hpp"

namespace pmkit::bench {

struct BenchConfig {
  Backend backend = Backend::redo;
  StructKind kind = StructKind::set;
  LockMode mode = LockMode::coarse;
  WorkloadSpec spec;
  harness::Geometry geometry = bench_geometry();
  bool simulate = true;
  std::string pool_path;  // direct mode only

  // Bench pools are larger than sweep pools: room for the workload's whole
  // key range plus churn.
  static harness::Geometry bench_geometry() {
    harness::Geometry g;
    g.pool_size = 64ull << 20;
    g.slot_bytes = 256ull << 10;
    g.slot_count = 64;
    g.named_region = 8ull << 20;
    g.catalog_capacity = 4096;
    g.bucket_count = 64;
    g.capacity = 4096;
    return g;
  }
};

struct StatsRow {
  std::uint32_t run = 0;
  Backend backend = Backend::redo;
  StructKind kind = StructKind::set;
  LockMode mode = LockMode::coarse;
  double wall_ms = 0;
  std::uint64_t ops_committed = 0;
  std::uint64_t flush_calls = 0;
  std::uint64_t fence_calls = 0;
  std::uint64_t bytes_flushed = 0;
  std::uint64_t bytes_logged = 0;
  double recovery_ms = 0;
  std::uint64_t name_resolutions = 0;
  bool simulate = true;
};

struct BenchResult {
  std::vector<StatsRow> rows;
  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
};

const char* backend_name(Backend b);
const char* kind_name(StructKind k);
const char* mode_name(LockMode m);
Backend parse_backend(const std::string& s);
StructKind parse_kind(const std::string& s);
LockMode parse_mode(const std::string& s);

// Multi-run protocol: run 1 creates, later runs recover, one row per run.
BenchResult run_bench(const BenchConfig& cfg);

// Fixed header, one line per row, same column order as StatsRow.
void emit_stats(const std::vector<StatsRow>& rows, std::ostream& out);
void emit_stats(const std::vector<StatsRow>& rows, const std::string& path,
                bool append);
std::vector<StatsRow> parse_stats(std::istream& in);

}  // namespace pmkit::bench
