// Crash-sweep driver: records one single-threaded workload, then crashes it
// at every persistence event (optionally with the line-dropping adversary)
// and checks each recovered image. Emits the sweep table as CSV.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pmkit/bench.hpp"
#include "pmkit/errors.hpp"
#include "pmkit/harness.hpp"

using namespace pmkit;

int main(int argc, char** argv) {
  CLI::App app{"pmkit crash sweep"};

  std::string backend = "redo";
  std::string ds = "set";
  std::string mode = "coarse";
  std::string mix = "50:40:10";
  std::string out_path;
  bool adversary = false;
  std::vector<std::uint64_t> seeds;
  harness::Geometry geo;
  WorkloadSpec spec;

  app.add_option("--backend", backend, "redo, undo or named")
      ->check(CLI::IsMember({"redo", "undo", "named"}));
  app.add_option("--ds", ds, "set, ht-closed or ht-open")
      ->check(CLI::IsMember({"set", "ht-closed", "ht-open"}));
  app.add_option("--mode", mode, "coarse or fine")
      ->check(CLI::IsMember({"coarse", "fine"}));
  app.add_option("--ops", spec.ops_per_thread, "operations (single thread)");
  app.add_option("--mix", mix, "insert:delete:find percentages");
  app.add_option("--seed", spec.seed, "workload seed");
  app.add_option("--key-lo", spec.key_lo, "lowest key");
  app.add_option("--key-hi", spec.key_hi, "highest key");
  app.add_flag("--adversary", adversary,
               "also keep seed-chosen subsets of unfenced lines");
  app.add_option("--adversary-seeds", seeds, "adversary seeds");
  app.add_option("--pool-size", geo.pool_size, "pool bytes");
  app.add_option("--snapshot-unit", geo.snapshot_unit,
                 "undo snapshot unit: 64, 256 or 4096");
  app.add_option("--out", out_path, "write sweep CSV here");

  CLI11_PARSE(app, argc, argv);

  try {
    spec.threads = 1;

    unsigned i = 0, d = 0, f = 0;
    if (std::sscanf(mix.c_str(), "%u:%u:%u", &i, &d, &f) != 3)
      raise(Errc::config, "mix must look like 50:40:10");
    spec.insert_pct = i;
    spec.delete_pct = d;
    spec.find_pct = f;

    harness::SweepOptions opt;
    opt.adversary = adversary;
    if (!seeds.empty()) {
      opt.adversary = true;
      opt.seeds = seeds;
    }

    harness::SweepReport rep =
        harness::crash_sweep(bench::parse_backend(backend),
                             bench::parse_kind(ds), bench::parse_mode(mode),
                             spec, opt, geo);

    if (out_path.empty()) {
      rep.to_csv(std::cout);
    } else {
      std::ofstream out(out_path);
      if (!out) raise(Errc::io, "cannot open " + out_path);
      rep.to_csv(out);
    }
    std::cerr << rep.events << " events, " << rep.rows.size() << " crash images, "
              << rep.failures() << " failures\n";
    return rep.all_pass() ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
