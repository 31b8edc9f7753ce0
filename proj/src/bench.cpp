#include "pmkit/bench.hpp"

#include <chrono>
#include <fstream>
#include <memory>
#include <sstream>
#include <sys/stat.h>
#include <thread>
#include <utility>

#include "pmkit/errors.hpp"
#include "pmkit/lock_registry.hpp"
#include "pmkit/named_heap.hpp"
#include "pmkit/redo_log.hpp"
#include "pmkit/structure.hpp"
#include "pmkit/undo_log.hpp"

namespace pmkit::bench {

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

bool file_nonempty(const std::string& path) {
  struct stat st {};
  return ::stat(path.c_str(), &st) == 0 && st.st_size > 0;
}

}  // namespace

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::redo: return "redo";
    case Backend::undo: return "undo";
    case Backend::named: return "named";
  }
  return "?";
}

const char* kind_name(StructKind k) {
  switch (k) {
    case StructKind::set: return "set";
    case StructKind::ht_closed: return "ht-closed";
    case StructKind::ht_open: return "ht-open";
  }
  return "?";
}

const char* mode_name(LockMode m) {
  return m == LockMode::coarse ? "coarse" : "fine";
}

Backend parse_backend(const std::string& s) {
  if (s == "redo") return Backend::redo;
  if (s == "undo") return Backend::undo;
  if (s == "named") return Backend::named;
  raise(Errc::config, "unknown backend: " + s);
}

StructKind parse_kind(const std::string& s) {
  if (s == "set") return StructKind::set;
  if (s == "ht-closed") return StructKind::ht_closed;
  if (s == "ht-open") return StructKind::ht_open;
  raise(Errc::config, "unknown structure kind: " + s);
}

LockMode parse_mode(const std::string& s) {
  if (s == "coarse") return LockMode::coarse;
  if (s == "fine") return LockMode::fine;
  raise(Errc::config, "unknown lock mode: " + s);
}

namespace {

StatsRow row_from(const harness::RunStats& st, const BenchConfig& cfg) {
  StatsRow r;
  r.run = st.run;
  r.backend = cfg.backend;
  r.kind = cfg.kind;
  r.mode = cfg.mode;
  r.wall_ms = st.wall_ms;
  r.ops_committed = st.ops_committed;
  r.flush_calls = st.domain.flush_calls;
  r.fence_calls = st.domain.fence_calls;
  r.bytes_flushed = st.domain.bytes_flushed;
  r.bytes_logged = st.bytes_logged;
  r.recovery_ms = st.recovery_ms;
  r.name_resolutions = st.name_resolutions;
  r.simulate = true;
  return r;
}

// The harness multi-run only exists for simulated pools (it carries durable
// snapshots between runs). Real files reopen by path instead, so direct mode
// gets its own loop with the same shape.
BenchResult run_direct(const BenchConfig& cfg) {
  const WorkloadSpec& spec = cfg.spec;
  if (cfg.pool_path.empty())
    raise(Errc::config, "direct mode needs a pool path");
  if (cfg.backend != Backend::named && spec.threads > cfg.geometry.slot_count)
    raise(Errc::config, "more threads than log slots");

  BenchResult out;
  for (std::uint32_t run = 1; run <= spec.runs; ++run) {
    StatsRow row;
    row.run = run;
    row.backend = cfg.backend;
    row.kind = cfg.kind;
    row.mode = cfg.mode;
    row.simulate = false;

    Clock::time_point t0 = Clock::now();
    std::unique_ptr<Pool> pool;
    if (run == 1) {
      auto dom =
          PersistDomain::create_direct(cfg.pool_path, cfg.geometry.pool_size);
      pool = Pool::create(std::move(dom), cfg.geometry.pool_config(cfg.backend));
    } else {
      pool = Pool::open(PersistDomain::open_direct(cfg.pool_path));
    }

    std::unique_ptr<RedoEngine> redo;
    std::unique_ptr<UndoEngine> undo;
    std::unique_ptr<NamedSession> named;
    std::unique_ptr<TxnBackend> be;
    switch (cfg.backend) {
      case Backend::redo:
        redo = std::make_unique<RedoEngine>(*pool);
        be = std::make_unique<RedoBackend>(*redo, *pool);
        break;
      case Backend::undo:
        undo = std::make_unique<UndoEngine>(*pool);
        be = std::make_unique<UndoBackend>(*undo, *pool);
        break;
      case Backend::named:
        named = std::make_unique<NamedSession>(*pool);
        break;
    }

    LockRegistry locks;
    std::unique_ptr<IStructure> ds;
    if (named) {
      ds = run == 1 ? create_structure(*named, locks, cfg.kind, cfg.mode,
                                       cfg.geometry.struct_config())
                    : attach_structure(*named, locks, cfg.kind, cfg.mode);
    } else {
      ds = run == 1 ? create_structure(*be, locks, cfg.kind, cfg.mode,
                                       cfg.geometry.struct_config())
                    : attach_structure(*be, locks, cfg.kind, cfg.mode);
    }
    row.recovery_ms = ms_between(t0, Clock::now());
    if (named) row.name_resolutions = named->stats().resolutions;

    DomainCounters c0 = pool->domain().counters();
    std::uint64_t logged0 = named ? named->stats().bytes_logged
                            : redo ? redo->counters().bytes_logged
                                   : undo->counters().bytes_logged;

    std::vector<std::uint64_t> committed(spec.threads, 0);
    std::vector<std::string> errors(spec.threads);
    Clock::time_point op0 = Clock::now();
    {
      std::vector<std::thread> workers;
      for (std::uint32_t t = 0; t < spec.threads; ++t) {
        workers.emplace_back([&, t] {
          try {
            OpStream ops(spec, t, run);
            for (std::uint32_t i = 0; i < spec.ops_per_thread; ++i) {
              PlannedOp op = ops.next();
              switch (op.kind) {
                case OpKind::insert:
                  committed[t] += ds->add(op.key, op.value) ? 1 : 0;
                  break;
                case OpKind::remove:
                  committed[t] += ds->remove(op.key) ? 1 : 0;
                  break;
                case OpKind::find:
                  (void)ds->find(op.key);
                  break;
              }
            }
          } catch (const Error& e) {
            errors[t] = e.what();
          }
        });
      }
      for (auto& w : workers) w.join();
    }
    row.wall_ms = ms_between(op0, Clock::now());
    for (auto& e : errors)
      if (!e.empty()) out.failures.push_back("worker: " + e);
    for (auto& v : harness::verify_report(*ds, *pool)) out.failures.push_back(v);

    for (std::uint64_t c : committed) row.ops_committed += c;
    if (redo) redo->close();
    if (undo) undo->close();
    if (named) named->close();

    DomainCounters c1 = pool->domain().counters();
    row.flush_calls = c1.flush_calls - c0.flush_calls;
    row.fence_calls = c1.fence_calls - c0.fence_calls;
    row.bytes_flushed = c1.bytes_flushed - c0.bytes_flushed;
    std::uint64_t logged1 = named ? named->stats().bytes_logged
                            : redo ? redo->counters().bytes_logged
                                   : undo->counters().bytes_logged;
    row.bytes_logged = logged1 - logged0;
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace

BenchResult run_bench(const BenchConfig& cfg) {
  cfg.spec.validate();
  if (!cfg.simulate) return run_direct(cfg);

  harness::MultiRunReport rep = harness::multi_run(
      cfg.backend, cfg.kind, cfg.mode, cfg.spec, cfg.geometry);
  BenchResult out;
  for (const auto& st : rep.runs) out.rows.push_back(row_from(st, cfg));
  out.failures = rep.violations;
  return out;
}

static const char kHeader[] =
    "run,backend,ds,mode,wall_ms,ops_committed,flush_calls,fence_calls,"
    "bytes_flushed,bytes_logged,recovery_ms,name_resolutions,sim";

void emit_stats(const std::vector<StatsRow>& rows, std::ostream& out) {
  out << kHeader << "\n";
  for (const auto& r : rows) {
    out << r.run << ',' << backend_name(r.backend) << ',' << kind_name(r.kind)
        << ',' << mode_name(r.mode) << ',' << r.wall_ms << ','
        << r.ops_committed << ',' << r.flush_calls << ',' << r.fence_calls
        << ',' << r.bytes_flushed << ',' << r.bytes_logged << ','
        << r.recovery_ms << ',' << r.name_resolutions << ','
        << (r.simulate ? "simulate" : "direct") << "\n";
  }
}

void emit_stats(const std::vector<StatsRow>& rows, const std::string& path,
                bool append) {
  bool skip_header = append && file_nonempty(path);
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) raise(Errc::io, "cannot open " + path);
  if (skip_header) {
    for (const auto& r : rows) {
      std::ostringstream line;
      std::vector<StatsRow> one{r};
      emit_stats(one, line);
      std::string s = line.str();
      out << s.substr(s.find('\n') + 1);
    }
  } else {
    emit_stats(rows, out);
  }
  if (!out) raise(Errc::io, "write failed: " + path);
}

std::vector<StatsRow> parse_stats(std::istream& in) {
  std::vector<StatsRow> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  if (line != kHeader) raise(Errc::corruption, "unexpected stats header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 13) raise(Errc::corruption, "bad stats row: " + line);
    StatsRow r;
    r.run = static_cast<std::uint32_t>(std::stoul(f[0]));
    r.backend = parse_backend(f[1]);
    r.kind = parse_kind(f[2]);
    r.mode = parse_mode(f[3]);
    r.wall_ms = std::stod(f[4]);
    r.ops_committed = std::stoull(f[5]);
    r.flush_calls = std::stoull(f[6]);
    r.fence_calls = std::stoull(f[7]);
    r.bytes_flushed = std::stoull(f[8]);
    r.bytes_logged = std::stoull(f[9]);
    r.recovery_ms = std::stod(f[10]);
    r.name_resolutions = std::stoull(f[11]);
    if (f[12] == "simulate") {
      r.simulate = true;
    } else if (f[12] == "direct") {
      r.simulate = false;
    } else {
      raise(Errc::corruption, "bad sim cell: " + f[12]);
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace pmkit::bench
