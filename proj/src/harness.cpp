#include "pmkit/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <optional>
#include <ostream>
#include <thread>

#include "pmkit/layout.hpp"
#include "pmkit/log_format.hpp"
#include "pmkit/named_heap.hpp"
#include "pmkit/redo_log.hpp"
#include "pmkit/undo_log.hpp"

namespace pmkit::harness {

namespace L = layout;

PoolConfig Geometry::pool_config(Backend backend) const {
  PoolConfig cfg;
  cfg.backend = backend;
  cfg.pool_size = pool_size;
  cfg.slot_bytes = slot_bytes;
  cfg.slot_count = slot_count;
  cfg.snapshot_unit = snapshot_unit;
  cfg.catalog_capacity = catalog_capacity;
  cfg.named_region_bytes = named_region;
  return cfg;
}

StructConfig Geometry::struct_config() const {
  return StructConfig{bucket_count, capacity};
}

bool SweepReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(),
                     [](const SweepRow& r) { return r.pass; });
}

std::uint64_t SweepReport::failures() const {
  return static_cast<std::uint64_t>(
      std::count_if(rows.begin(), rows.end(),
                    [](const SweepRow& r) { return !r.pass; }));
}

void SweepReport::to_csv(std::ostream& out) const {
  out << "event_index,adversary_seed,pass,violation_kind\n";
  for (const SweepRow& r : rows)
    out << r.event_index << ',' << r.adversary_seed << ','
        << (r.pass ? 1 : 0) << ',' << r.violation << '\n';
}

bool CrashSampleReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(),
                     [](const SweepRow& r) { return r.pass; });
}

std::vector<std::string> verify_report(IStructure& ds, Pool& pool) {
  std::vector<std::string> v;
  try {
    ds.verify();
  } catch (const Error& e) {
    v.push_back(std::string("structure: ") + e.what());
  }
  try {
    pool.audit();
  } catch (const Error& e) {
    v.push_back(std::string("heap: ") + e.what());
  }
  return v;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

struct Session {
  std::unique_ptr<Pool> pool;
  std::unique_ptr<RedoEngine> redo;
  std::unique_ptr<UndoEngine> undo;
  std::unique_ptr<NamedSession> named;
  std::unique_ptr<TxnBackend> be;
  std::unique_ptr<LockRegistry> locks;
  std::unique_ptr<IStructure> ds;

  PersistDomain& dom() { return pool->domain(); }

  void close_clean() {
    if (redo) redo->close();
    if (undo) undo->close();
    if (named) named->close();
  }
};

// Engine construction runs the backend's recovery.
void attach_engines(Session& s, Backend backend) {
  switch (backend) {
    case Backend::redo:
      s.redo = std::make_unique<RedoEngine>(*s.pool);
      s.be = std::make_unique<RedoBackend>(*s.redo, *s.pool);
      break;
    case Backend::undo:
      s.undo = std::make_unique<UndoEngine>(*s.pool);
      s.be = std::make_unique<UndoBackend>(*s.undo, *s.pool);
      break;
    case Backend::named:
      s.named = std::make_unique<NamedSession>(*s.pool);
      break;
  }
  s.locks = std::make_unique<LockRegistry>();
}

void make_structure(Session& s, StructKind kind, LockMode mode,
                    const StructConfig& cfg, bool create) {
  if (s.named)
    s.ds = create ? create_structure(*s.named, *s.locks, kind, mode, cfg)
                  : attach_structure(*s.named, *s.locks, kind, mode);
  else
    s.ds = create ? create_structure(*s.be, *s.locks, kind, mode, cfg)
                  : attach_structure(*s.be, *s.locks, kind, mode);
}

bool exec_op(IStructure& ds, const PlannedOp& op) {
  switch (op.kind) {
    case OpKind::insert:
      return ds.add(op.key, op.value);
    case OpKind::remove:
      return ds.remove(op.key);
    case OpKind::find:
      return ds.find(op.key).has_value();
  }
  return false;
}

std::uint64_t engine_bytes_logged(const Session& s) {
  if (s.redo) return s.redo->counters().bytes_logged;
  if (s.undo) return s.undo->counters().bytes_logged;
  if (s.named) return s.named->stats().bytes_logged;
  return 0;
}

std::uint64_t engine_txns_committed(const Session& s) {
  if (s.redo) return s.redo->counters().txns_committed;
  if (s.undo) return s.undo->counters().txns_committed;
  return 0;
}

// A fully recorded single-threaded workload: the op trace, the oracle state
// after every prefix, and (named backend) the durable image at every
// checkpoint acknowledgment.
struct Recording {
  Session s;
  std::uint64_t e_pool = 0;  // events when Pool::create returned
  std::uint64_t total = 0;
  OpTrace ops;
  std::vector<OracleState> states;  // states[i]: after i ops
  std::vector<std::uint64_t> acks;  // acks[i]: ack event of states[i]
  std::vector<std::byte> pool_image;              // named: image at e_pool
  std::vector<std::vector<std::byte>> images;     // named: image at acks[i]
};

Recording record_single(Backend backend, StructKind kind, LockMode mode,
                        const WorkloadSpec& spec, const Geometry& geo,
                        bool with_images) {
  if (geo.direct) raise(Errc::refused, "crash sweeps need a simulated pool");
  spec.validate();
  if (spec.threads != 1)
    raise(Errc::config, "exhaustive sweeps are single-threaded");

  auto dom = PersistDomain::create_sim(geo.pool_size);
  dom->set_tracing(true);
  Recording r;
  r.s.pool = Pool::create(std::move(dom), geo.pool_config(backend));
  PersistDomain& d = r.s.dom();
  r.e_pool = d.event_count();
  if (backend == Backend::named && with_images)
    r.pool_image = d.materialize_crash(r.e_pool);

  attach_engines(r.s, backend);
  make_structure(r.s, kind, mode, geo.struct_config(), true);
  r.states.push_back({});
  r.acks.push_back(d.event_count());
  if (backend == Backend::named && with_images)
    r.images.push_back(d.materialize_crash(r.acks.back()));

  OpStream stream(spec, 0, 1);
  for (std::uint32_t i = 0; i < spec.ops_per_thread; ++i) {
    OpRecord rec;
    rec.thread = 0;
    rec.start_event = d.event_count();
    PlannedOp p = stream.next();
    rec.kind = p.kind;
    rec.key = p.key;
    rec.value = p.value;
    OracleState next = r.states.back();
    bool expect = oracle_apply(next, p);
    bool got = exec_op(*r.s.ds, p);
    if (got != expect)
      raise(Errc::state, "live result diverges from the oracle");
    if (backend == Backend::named) r.s.named->checkpoint();
    rec.result = got;
    rec.acked = true;
    rec.ack_event = d.event_count();
    r.ops.push_back(rec);
    r.states.push_back(std::move(next));
    r.acks.push_back(rec.ack_event);
    if (backend == Backend::named && with_images)
      r.images.push_back(d.materialize_crash(r.acks.back()));
  }
  r.s.close_clean();
  r.total = d.event_count();
  return r;
}

// A commit marker durable before one of its records would break recovery;
// scan a crash image for that shape. Slot framing is lost after a torn
// record, so the marker is searched bytewise.
std::optional<std::string> redo_marker_order_violation(const Pool& pool) {
  const PersistDomain& d = pool.domain();
  const std::byte* base = d.data();
  for (std::uint64_t slot = 0; slot < pool.slot_count(); ++slot) {
    std::uint64_t so = pool.log_region() + slot * pool.slot_bytes();
    std::uint64_t txn = d.load_u64(so);
    if (txn == 0) continue;
    for (std::uint64_t pos = L::kRedoSlotHeader;
         pos + L::kCommitMarkerBytes <= pool.slot_bytes(); ++pos) {
      if (d.load_u32(so + pos + 8) != L::kMarkerLength) continue;
      if (!logfmt::marker_valid(base + so + pos, L::kTagRedoCommit, txn))
        continue;
      // Found the marker: everything before it must parse as clean records.
      std::uint64_t q = L::kRedoSlotHeader;
      bool clean = true;
      while (q < pos) {
        if (q + L::kRecordHeader > pos) {
          clean = false;
          break;
        }
        logfmt::RecordHead h = logfmt::read_head(base + so + q);
        if (h.tag() != L::kTagRedoData || h.length == L::kMarkerLength ||
            q + L::kRecordHeader + h.length > pos) {
          clean = false;
          break;
        }
        std::span<const std::byte> payload{base + so + q + L::kRecordHeader,
                                           h.length};
        if (h.crc != logfmt::body_crc(h.target, h.length, payload)) {
          clean = false;
          break;
        }
        q += L::kRecordHeader + h.length;
      }
      if (!clean || q != pos)
        return "log-order: commit marker durable before its records";
      break;
    }
  }
  return std::nullopt;
}

// Recover the image once more and require a byte-identical durable state.
std::optional<std::string> idempotence_violation(
    const std::vector<std::byte>& recovered, Backend backend) {
  try {
    auto dom = PersistDomain::open_sim(recovered);
    Session s;
    s.pool = Pool::open(std::move(dom));
    attach_engines(s, backend);
    if (s.pool->domain().durable_snapshot() != recovered)
      return "recovery is not idempotent";
  } catch (const Error& e) {
    return std::string("reopen after recovery: ") + e.what();
  }
  return std::nullopt;
}

void sweep_txn_point(const Recording& r, Backend backend, StructKind kind,
                     LockMode mode, const Geometry& geo, std::uint64_t k,
                     std::optional<std::uint64_t> seed, bool idem,
                     SweepReport& rep) {
  SweepRow row;
  row.event_index = k;
  row.adversary_seed = seed ? static_cast<std::int64_t>(*seed) : -1;
  auto done = [&](std::string why) {
    row.pass = why.empty();
    row.violation = std::move(why);
    rep.rows.push_back(row);
  };

  const PersistDomain& d = r.s.pool->domain();
  auto img = seed ? d.materialize_crash(k, *seed) : d.materialize_crash(k);

  // Number of acknowledged states at k (creation counts as state 0).
  std::size_t idx = static_cast<std::size_t>(
      std::upper_bound(r.acks.begin(), r.acks.end(), k) - r.acks.begin());

  Session s2;
  try {
    s2.pool = Pool::open(PersistDomain::open_sim(std::move(img)));
  } catch (const Error&) {
    return done(idx == 0 ? "" : "pool refused after creation was acknowledged");
  }
  if (backend == Backend::redo) {
    if (auto v = redo_marker_order_violation(*s2.pool)) return done(*v);
  }
  try {
    attach_engines(s2, backend);
  } catch (const Error& e) {
    return done(std::string("recovery: ") + e.what());
  }

  if (!s2.pool->root()) {
    if (idx != 0) return done("root lost after creation was acknowledged");
    try {
      s2.pool->audit();
    } catch (const Error& e) {
      return done(std::string("heap: ") + e.what());
    }
  } else {
    try {
      make_structure(s2, kind, mode, geo.struct_config(), false);
    } catch (const Error& e) {
      return done(std::string("attach: ") + e.what());
    }
    auto snap = s2.ds->snapshot();
    // Committed prefix, plus the in-flight op if it fully applied.
    bool matched = false;
    if (idx > 0 && snap == oracle_items(r.states[idx - 1])) matched = true;
    if (!matched && idx < r.states.size() &&
        snap == oracle_items(r.states[idx]))
      matched = true;
    if (!matched) return done("state is not a committed prefix");
    auto violations = verify_report(*s2.ds, *s2.pool);
    if (!violations.empty()) return done(violations.front());
  }

  if (idem) {
    if (auto v = idempotence_violation(s2.pool->domain().durable_snapshot(),
                                       backend))
      return done(*v);
  }
  done("");
}

// Named comparison covers the header page, the object space, and the
// catalog (epoch counter included), skipping only the clean flag and the
// session counter, which recovery legitimately moves.
bool logical_eq(const std::vector<std::byte>& a, const std::vector<std::byte>& b,
                std::uint64_t log_region, std::uint64_t area_end) {
  auto seg = [&](std::uint64_t lo, std::uint64_t hi) {
    return std::memcmp(a.data() + lo, b.data() + lo, hi - lo) == 0;
  };
  return seg(0, L::kCleanFlagOff) &&
         seg(L::kCleanFlagOff + 8, L::kSessionCounterOff) &&
         seg(L::kSessionCounterOff + 8, log_region) && seg(log_region, area_end);
}

void sweep_named_point(const Recording& r, StructKind kind, LockMode mode,
                       const Geometry& geo, std::uint64_t k,
                       std::optional<std::uint64_t> seed, bool idem,
                       SweepReport& rep) {
  SweepRow row;
  row.event_index = k;
  row.adversary_seed = seed ? static_cast<std::int64_t>(*seed) : -1;
  auto done = [&](std::string why) {
    row.pass = why.empty();
    row.violation = std::move(why);
    rep.rows.push_back(row);
  };

  const PersistDomain& d = r.s.pool->domain();
  auto img = seed ? d.materialize_crash(k, *seed) : d.materialize_crash(k);

  Session s2;
  try {
    s2.pool = Pool::open(PersistDomain::open_sim(std::move(img)));
  } catch (const Error&) {
    return done(k < r.e_pool ? "" : "pool refused after creation");
  }
  try {
    attach_engines(s2, Backend::named);
  } catch (const Error& e) {
    return done(std::string("recovery: ") + e.what());
  }

  std::uint64_t log_region = s2.pool->log_region();
  std::uint64_t catalog_pages =
      (s2.pool->catalog_capacity() * L::kCatalogEntryBytes + L::kPageSize - 1) /
      L::kPageSize;
  std::uint64_t area_end = log_region + (1 + catalog_pages) * L::kPageSize;

  auto recovered = s2.pool->domain().durable_snapshot();

  // Most crashes land on the latest acknowledged checkpoint; try that
  // first, then its neighbors, then the pre-structure image.
  std::size_t guess = static_cast<std::size_t>(
      std::upper_bound(r.acks.begin(), r.acks.end(), k) - r.acks.begin());
  std::vector<std::size_t> order;
  auto consider = [&](std::size_t i) {
    if (i < r.images.size() &&
        std::find(order.begin(), order.end(), i) == order.end())
      order.push_back(i);
  };
  if (guess > 0) consider(guess - 1);
  consider(guess);
  for (std::size_t i = 0; i < r.images.size(); ++i) consider(i);

  std::optional<std::size_t> boundary;
  for (std::size_t i : order) {
    if (logical_eq(recovered, r.images[i], log_region, area_end)) {
      boundary = i;
      break;
    }
  }
  bool pre_structure =
      !boundary &&
      logical_eq(recovered, r.pool_image, log_region, area_end);
  if (!boundary && !pre_structure)
    return done("recovered state is not a checkpoint boundary");

  if (pre_structure) {
    if (s2.pool->root()) return done("pre-structure image carries a root");
    try {
      s2.pool->audit();
    } catch (const Error& e) {
      return done(std::string("heap: ") + e.what());
    }
  } else {
    try {
      make_structure(s2, kind, mode, geo.struct_config(), false);
    } catch (const Error& e) {
      return done(std::string("attach: ") + e.what());
    }
    if (s2.ds->snapshot() != oracle_items(r.states[*boundary]))
      return done("recovered keys do not match the matched checkpoint");
    auto violations = verify_report(*s2.ds, *s2.pool);
    if (!violations.empty()) return done(violations.front());
  }

  if (idem) {
    if (auto v = idempotence_violation(s2.pool->domain().durable_snapshot(),
                                       Backend::named))
      return done(*v);
  }
  done("");
}

}  // namespace

std::uint64_t enumerate_events(Backend backend, StructKind kind, LockMode mode,
                               const WorkloadSpec& spec, const Geometry& geo) {
  return record_single(backend, kind, mode, spec, geo, false).total;
}

SweepReport crash_sweep(Backend backend, StructKind kind, LockMode mode,
                        const WorkloadSpec& spec, const SweepOptions& opt,
                        const Geometry& geo) {
  Recording r = record_single(backend, kind, mode, spec, geo, true);
  SweepReport rep;
  rep.events = r.total;
  std::vector<std::optional<std::uint64_t>> seeds;
  seeds.push_back(std::nullopt);
  if (opt.adversary)
    for (std::uint64_t s : opt.seeds) seeds.push_back(s);

  for (std::uint64_t k = 0; k <= r.total; ++k) {
    for (const auto& seed : seeds) {
      if (backend == Backend::named)
        sweep_named_point(r, kind, mode, geo, k, seed, opt.check_idempotence,
                          rep);
      else
        sweep_txn_point(r, backend, kind, mode, geo, k, seed,
                        opt.check_idempotence, rep);
    }
  }
  return rep;
}

MultiRunReport multi_run(Backend backend, StructKind kind, LockMode mode,
                         const WorkloadSpec& spec, const Geometry& geo) {
  spec.validate();
  if (geo.direct) raise(Errc::refused, "the harness drives simulated pools");
  if (backend != Backend::named && spec.threads > geo.slot_count)
    raise(Errc::config, "need one log slot per worker thread");

  MultiRunReport rep;
  OracleState exact;  // single-threaded runs: full replay with values
  std::map<std::int64_t, std::pair<std::uint64_t, std::uint64_t>> counts;
  std::vector<std::byte> carry;

  for (std::uint32_t run = 1; run <= spec.runs; ++run) {
    RunStats st;
    st.run = run;
    Clock::time_point t0 = Clock::now();
    Session s;
    if (run == 1) {
      s.pool = Pool::create(PersistDomain::create_sim(geo.pool_size),
                            geo.pool_config(backend));
      attach_engines(s, backend);
      make_structure(s, kind, mode, geo.struct_config(), true);
    } else {
      s.pool = Pool::open(PersistDomain::open_sim(std::move(carry)));
      attach_engines(s, backend);
      make_structure(s, kind, mode, geo.struct_config(), false);
    }
    st.recovery_ms = ms_between(t0, Clock::now());
    if (s.named) st.name_resolutions = s.named->stats().resolutions;

    DomainCounters c0 = s.dom().counters();
    std::uint64_t logged0 = engine_bytes_logged(s);
    std::uint64_t txns0 = engine_txns_committed(s);

    std::vector<std::vector<std::pair<PlannedOp, bool>>> results(spec.threads);
    std::vector<std::string> errors(spec.threads);
    Clock::time_point t1 = Clock::now();
    if (spec.threads == 1) {
      OpStream stream(spec, 0, run);
      for (std::uint32_t i = 0; i < spec.ops_per_thread; ++i) {
        PlannedOp p = stream.next();
        bool expect = oracle_apply(exact, p);
        bool got = exec_op(*s.ds, p);
        if (got != expect) {
          rep.violations.push_back("live result diverges from the oracle");
          break;
        }
        results[0].emplace_back(p, got);
      }
    } else {
      std::vector<std::thread> workers;
      for (std::uint32_t t = 0; t < spec.threads; ++t) {
        workers.emplace_back([&, t] {
          try {
            OpStream stream(spec, t, run);
            for (std::uint32_t i = 0; i < spec.ops_per_thread; ++i) {
              PlannedOp p = stream.next();
              bool got = exec_op(*s.ds, p);
              results[t].emplace_back(p, got);
            }
          } catch (const Error& e) {
            errors[t] = e.what();
          }
        });
      }
      for (auto& w : workers) w.join();
    }
    st.wall_ms = ms_between(t1, Clock::now());
    for (const std::string& e : errors)
      if (!e.empty()) rep.violations.push_back("worker: " + e);

    for (const auto& tr : results) {
      for (const auto& [p, got] : tr) {
        if (!got) continue;
        if (p.kind == OpKind::insert) {
          counts[p.key].first += 1;
          st.ops_committed += 1;
        } else if (p.kind == OpKind::remove) {
          counts[p.key].second += 1;
          st.ops_committed += 1;
        }
      }
    }

    auto snap = s.ds->snapshot();
    if (spec.threads == 1) {
      if (snap != oracle_items(exact))
        rep.violations.push_back("final state differs from the oracle");
    } else {
      OracleState present;
      for (auto& [k, v] : snap) present.emplace(k, v);
      for (const auto& [key, c] : counts) {
        if (c.first < c.second || c.first > c.second + 1) {
          rep.violations.push_back("success counts violate add/remove alternation");
          break;
        }
        bool expect_present = c.first == c.second + 1;
        if (present.count(key) != (expect_present ? 1u : 0u)) {
          rep.violations.push_back("recovered presence contradicts the op results");
          break;
        }
      }
      for (auto& [k, v] : snap)
        if (!counts.count(k)) {
          rep.violations.push_back("key present that no op ever inserted");
          break;
        }
    }
    for (auto& v : verify_report(*s.ds, *s.pool)) rep.violations.push_back(v);

    s.close_clean();
    DomainCounters c1 = s.dom().counters();
    st.domain.flush_calls = c1.flush_calls - c0.flush_calls;
    st.domain.fence_calls = c1.fence_calls - c0.fence_calls;
    st.domain.bytes_flushed = c1.bytes_flushed - c0.bytes_flushed;
    st.bytes_logged = engine_bytes_logged(s) - logged0;
    st.txns_committed = engine_txns_committed(s) - txns0;
    rep.runs.push_back(st);

    carry = s.dom().durable_snapshot();
  }
  return rep;
}

CrashSampleReport sampled_concurrent_crashes(StructKind kind, LockMode mode,
                                             const WorkloadSpec& spec,
                                             std::uint32_t samples,
                                             const SweepOptions& opt,
                                             const Geometry& geo) {
  spec.validate();
  if (geo.direct) raise(Errc::refused, "crash sampling needs a simulated pool");
  if (spec.threads > geo.slot_count)
    raise(Errc::config, "need one log slot per worker thread");

  auto dom = PersistDomain::create_sim(geo.pool_size);
  dom->set_tracing(true);
  Session s;
  s.pool = Pool::create(std::move(dom), geo.pool_config(Backend::redo));
  attach_engines(s, Backend::redo);
  make_structure(s, kind, mode, geo.struct_config(), true);
  std::uint64_t e_created = s.dom().event_count();

  std::vector<std::thread> workers;
  std::vector<std::string> errors(spec.threads);
  for (std::uint32_t t = 0; t < spec.threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        OpStream stream(spec, t, 1);
        for (std::uint32_t i = 0; i < spec.ops_per_thread; ++i)
          exec_op(*s.ds, stream.next());
      } catch (const Error& e) {
        errors[t] = e.what();
      }
    });
  }
  for (auto& w : workers) w.join();
  s.close_clean();
  for (const std::string& e : errors)
    if (!e.empty()) raise(Errc::state, "worker failed: " + e);
  std::uint64_t total = s.dom().event_count();

  CrashSampleReport rep;
  rep.events = total;
  std::vector<std::optional<std::uint64_t>> seeds;
  seeds.push_back(std::nullopt);
  if (opt.adversary)
    for (std::uint64_t sd : opt.seeds) seeds.push_back(sd);

  for (std::uint32_t j = 1; j <= samples; ++j) {
    std::uint64_t k = e_created + (total - e_created) * j / (samples + 1);
    for (const auto& seed : seeds) {
      SweepRow row;
      row.event_index = k;
      row.adversary_seed = seed ? static_cast<std::int64_t>(*seed) : -1;
      auto img = seed ? s.dom().materialize_crash(k, *seed)
                      : s.dom().materialize_crash(k);
      try {
        Session s2;
        s2.pool = Pool::open(PersistDomain::open_sim(std::move(img)));
        if (auto v = redo_marker_order_violation(*s2.pool)) {
          row.violation = *v;
          rep.rows.push_back(row);
          continue;
        }
        attach_engines(s2, Backend::redo);
        make_structure(s2, kind, mode, geo.struct_config(), false);
        auto violations = verify_report(*s2.ds, *s2.pool);
        if (!violations.empty()) {
          row.violation = violations.front();
          rep.rows.push_back(row);
          continue;
        }
        // Fresh locks: a full find per surviving key walks every node under
        // newly created mutexes.
        for (auto& [key, value] : s2.ds->snapshot()) {
          auto got = s2.ds->find(key);
          if (!got || *got != value) {
            row.violation = "recovered node unreadable through fresh locks";
            break;
          }
        }
        if (row.violation.empty()) row.pass = true;
      } catch (const Error& e) {
        row.violation = std::string("recovery: ") + e.what();
      }
      rep.rows.push_back(row);
    }
  }
  return rep;
}

}  // namespace pmkit::harness
