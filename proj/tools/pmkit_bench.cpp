// Workload driver: runs the multi-run protocol against one backend and one
// structure, prints per-run stats, optionally appends them to a CSV.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "pmkit/bench.hpp"
#include "pmkit/errors.hpp"

using namespace pmkit;

int main(int argc, char** argv) {
  CLI::App app{"pmkit workload bench"};

  std::string backend = "redo";
  std::string ds = "set";
  std::string mode = "coarse";
  std::string mix = "50:40:10";
  std::string sim = "simulate";
  std::string pool_path;
  std::string out_path;
  bool truncate = false;
  bench::BenchConfig cfg;

  app.add_option("--backend", backend, "redo, undo or named")
      ->check(CLI::IsMember({"redo", "undo", "named"}));
  app.add_option("--ds", ds, "set, ht-closed or ht-open")
      ->check(CLI::IsMember({"set", "ht-closed", "ht-open"}));
  app.add_option("--mode", mode, "coarse or fine")
      ->check(CLI::IsMember({"coarse", "fine"}));
  app.add_option("--threads", cfg.spec.threads, "worker threads");
  app.add_option("--ops", cfg.spec.ops_per_thread, "operations per thread");
  app.add_option("--mix", mix, "insert:delete:find percentages");
  app.add_option("--runs", cfg.spec.runs, "runs in the multi-run protocol");
  app.add_option("--seed", cfg.spec.seed, "workload seed");
  app.add_option("--key-lo", cfg.spec.key_lo, "lowest key");
  app.add_option("--key-hi", cfg.spec.key_hi, "highest key");
  app.add_option("--pool", pool_path, "pool file (direct mode)");
  app.add_option("--pool-size", cfg.geometry.pool_size, "pool bytes");
  app.add_option("--slot-bytes", cfg.geometry.slot_bytes, "log slot bytes");
  app.add_option("--slot-count", cfg.geometry.slot_count, "log slot count");
  app.add_option("--snapshot-unit", cfg.geometry.snapshot_unit,
                 "undo snapshot unit: 64, 256 or 4096");
  app.add_option("--named-region", cfg.geometry.named_region,
                 "named backend: catalog + checkpoint region bytes");
  app.add_option("--catalog-capacity", cfg.geometry.catalog_capacity,
                 "named backend: catalog slots");
  app.add_option("--buckets", cfg.geometry.bucket_count,
                 "ht-closed bucket count (power of two)");
  app.add_option("--capacity", cfg.geometry.capacity,
                 "ht-open slot count (power of two)");
  app.add_option("--sim", sim, "simulate or direct")
      ->check(CLI::IsMember({"simulate", "direct"}));
  app.add_option("--out", out_path, "append stats CSV here");
  app.add_flag("--truncate", truncate, "overwrite --out instead of appending");

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.backend = bench::parse_backend(backend);
    cfg.kind = bench::parse_kind(ds);
    cfg.mode = bench::parse_mode(mode);
    cfg.simulate = sim == "simulate";
    cfg.pool_path = pool_path;

    unsigned i = 0, d = 0, f = 0;
    if (std::sscanf(mix.c_str(), "%u:%u:%u", &i, &d, &f) != 3)
      raise(Errc::config, "mix must look like 50:40:10");
    cfg.spec.insert_pct = i;
    cfg.spec.delete_pct = d;
    cfg.spec.find_pct = f;

    bench::BenchResult res = bench::run_bench(cfg);
    bench::emit_stats(res.rows, std::cout);
    if (!out_path.empty()) bench::emit_stats(res.rows, out_path, !truncate);

    if (!res.ok()) {
      for (const auto& fail : res.failures)
        std::cerr << "FAIL: " << fail << "\n";
      return 1;
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
