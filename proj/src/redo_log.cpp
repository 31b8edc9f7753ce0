#include "pmkit/redo_log.hpp"

#include <set>
#include <unordered_map>
#include <utility>

#include "pmkit/errors.hpp"
#include "pmkit/layout.hpp"
#include "pmkit/log_format.hpp"

namespace pmkit {

namespace L = layout;

struct RedoTxn::State final : DurableWriter {
  RedoEngine* eng = nullptr;
  std::uint32_t slot = 0;
  std::uint64_t slot_off = 0;
  std::uint64_t pos = L::kRedoSlotHeader;
  std::uint64_t txn_id = 0;
  bool open = true;
  std::uint64_t bytes_logged = 0;
  // volatile pre-images, restored in reverse on abort
  std::vector<std::pair<std::uint64_t, std::vector<std::byte>>> pre;
  std::set<std::uint64_t> home_lines;
  std::unique_lock<std::mutex> alloc_lk;

  void write_at(std::uint64_t off, std::span<const std::byte> data) override {
    eng->txn_write(*this, off, data);
  }
  bool acquire_allocator(Pool& p) override {
    if (!alloc_lk.owns_lock())
      alloc_lk = std::unique_lock<std::mutex>(p.alloc_mutex());
    return true;
  }
};

RedoTxn::RedoTxn(std::unique_ptr<State> st) : st_(std::move(st)) {}
RedoTxn::RedoTxn(RedoTxn&&) noexcept = default;
RedoTxn& RedoTxn::operator=(RedoTxn&&) noexcept = default;

RedoTxn::~RedoTxn() {
  if (st_ && st_->open) {
    try {
      st_->eng->txn_abort(*st_);
    } catch (...) {
    }
  }
}

void RedoTxn::write(std::uint64_t off, std::span<const std::byte> data) {
  if (!st_ || !st_->open) raise(Errc::state, "transaction is closed");
  st_->eng->txn_write(*st_, off, data);
}

void RedoTxn::commit() {
  if (!st_ || !st_->open) raise(Errc::state, "transaction is closed");
  st_->eng->txn_commit(*st_);
}

void RedoTxn::abort() {
  if (!st_ || !st_->open) raise(Errc::state, "transaction is closed");
  st_->eng->txn_abort(*st_);
}

bool RedoTxn::open() const { return st_ && st_->open; }

DurableWriter& RedoTxn::writer() {
  if (!st_) raise(Errc::state, "moved-from transaction");
  return *st_;
}

RedoEngine::RedoEngine(Pool& pool) : pool_(pool), dom_(pool.domain()) {
  if (pool.backend() != Backend::redo)
    raise(Errc::config, "pool was not created for redo logging");
  recover();
  free_slots_.reserve(pool_.slot_count());
  for (std::uint32_t s = static_cast<std::uint32_t>(pool_.slot_count()); s > 0;
       --s)
    free_slots_.push_back(s - 1);
}

RedoEngine::~RedoEngine() = default;

void RedoEngine::recover() {
  const std::uint64_t region = pool_.log_region();
  const std::uint64_t sbytes = pool_.slot_bytes();
  for (std::uint64_t s = 0; s < pool_.slot_count(); ++s) {
    std::uint64_t so = region + s * sbytes;
    std::uint64_t txn = dom_.load_u64(so);
    if (txn == 0) continue;

    struct Rec {
      std::uint64_t log_payload;
      std::uint64_t home;
      std::uint32_t len;
    };
    std::vector<Rec> recs;
    bool committed = false;
    std::uint64_t pos = L::kRedoSlotHeader;
    while (pos + L::kRecordHeader <= sbytes) {
      logfmt::RecordHead h = logfmt::read_head(dom_.data() + so + pos);
      if (h.is_marker()) {
        committed = pos + L::kCommitMarkerBytes <= sbytes &&
                    logfmt::marker_valid(dom_.data() + so + pos,
                                         L::kTagRedoCommit, txn);
        break;
      }
      if (h.tag() != L::kTagRedoData) break;
      std::uint64_t len = h.length;
      if (pos + L::kRecordHeader + len > sbytes) break;
      if (h.offset() + len > region) break;
      std::span<const std::byte> payload{dom_.data() + so + pos + L::kRecordHeader,
                                         len};
      if (h.crc != logfmt::body_crc(h.target, h.length, payload)) break;
      recs.push_back(Rec{so + pos + L::kRecordHeader, h.offset(), h.length});
      pos += L::kRecordHeader + len;
    }

    if (committed) {
      for (const Rec& r : recs) {
        std::vector<std::byte> buf(r.len);
        dom_.read(r.log_payload, buf);
        dom_.store(r.home, buf);
        dom_.flush(r.home, r.len);
      }
      dom_.fence();
      recovery_.replayed += 1;
    } else {
      recovery_.discarded += 1;
    }
    dom_.store_u64(so, 0);
    dom_.flush(so, 8);
    dom_.fence();
  }
}

namespace {
// Flat transactions only: one live txn per (thread, engine). A txn must
// finish on the thread that began it.
thread_local std::unordered_map<const void*, int> tl_open_txns;
}  // namespace

RedoTxn RedoEngine::begin() {
  if (tl_open_txns[this] > 0)
    raise(Errc::nesting, "this thread already has an open transaction");
  auto st = std::make_unique<RedoTxn::State>();
  st->eng = this;
  {
    std::lock_guard lk(mu_);
    if (!activated_) {
      pool_.bump_session();
      pool_.set_clean_shutdown(false);
      activated_ = true;
    }
    if (free_slots_.empty())
      raise(Errc::out_of_log, "every log slot is held by a live transaction");
    st->slot = free_slots_.back();
    free_slots_.pop_back();
    st->txn_id = (pool_.session() << 32) | next_seq_++;
  }
  st->slot_off = pool_.log_region() + std::uint64_t(st->slot) * pool_.slot_bytes();
  dom_.store_u64(st->slot_off, st->txn_id);
  dom_.flush(st->slot_off, 8);
  tl_open_txns[this] += 1;
  return RedoTxn(std::move(st));
}

void RedoEngine::txn_write(RedoTxn::State& st, std::uint64_t off,
                           std::span<const std::byte> data) {
  if (!st.open) raise(Errc::state, "transaction is closed");
  if (data.empty()) return;
  if (off > pool_.log_region() || data.size() > pool_.log_region() - off)
    raise(Errc::range, "write outside the object space");
  if (st.pos + L::kRecordHeader + data.size() + L::kCommitMarkerBytes >
      pool_.slot_bytes()) {
    txn_abort(st);  // bounded slots never grow
    raise(Errc::out_of_log, "log slot full");
  }

  std::vector<std::byte> rec = logfmt::encode_record(L::kTagRedoData, off, data);
  dom_.store(st.slot_off + st.pos, rec);
  dom_.flush(st.slot_off + st.pos, rec.size());
  st.pos += rec.size();
  st.bytes_logged += rec.size();

  std::vector<std::byte> old(data.size());
  dom_.read(off, old);
  st.pre.emplace_back(off, std::move(old));

  dom_.store(off, data);
  std::uint64_t first = off / kFlushLine;
  std::uint64_t last = (off + data.size() - 1) / kFlushLine;
  for (std::uint64_t line = first; line <= last; ++line)
    st.home_lines.insert(line);
}

void RedoEngine::txn_commit(RedoTxn::State& st) {
  if (!st.open) raise(Errc::state, "transaction is closed");
  dom_.fence();  // records and slot header are durable past here

  std::vector<std::byte> marker =
      logfmt::encode_marker(L::kTagRedoCommit, st.txn_id);
  dom_.store(st.slot_off + st.pos, marker);
  dom_.flush(st.slot_off + st.pos, marker.size());
  dom_.fence();  // commit point
  st.bytes_logged += marker.size();

  // Write the home lines back, then retire the slot.
  auto it = st.home_lines.begin();
  while (it != st.home_lines.end()) {
    std::uint64_t start = *it;
    std::uint64_t end = start + 1;
    ++it;
    while (it != st.home_lines.end() && *it == end) {
      ++end;
      ++it;
    }
    dom_.flush(start * kFlushLine, (end - start) * kFlushLine);
  }
  if (!st.home_lines.empty()) dom_.fence();

  dom_.store_u64(st.slot_off, 0);
  dom_.flush(st.slot_off, 8);
  dom_.fence();
  finish(st, true);
}

void RedoEngine::txn_abort(RedoTxn::State& st) {
  if (!st.open) raise(Errc::state, "transaction is closed");
  for (auto it = st.pre.rbegin(); it != st.pre.rend(); ++it)
    dom_.store(it->first, it->second);
  dom_.store_u64(st.slot_off, 0);
  dom_.flush(st.slot_off, 8);
  dom_.fence();
  finish(st, false);
}

void RedoEngine::finish(RedoTxn::State& st, bool committed) {
  st.open = false;
  if (st.alloc_lk.owns_lock()) st.alloc_lk.unlock();
  tl_open_txns[this] -= 1;
  std::lock_guard lk(mu_);
  if (committed) {
    counters_.txns_committed += 1;
    counters_.bytes_logged += st.bytes_logged;
  } else {
    counters_.txns_aborted += 1;
  }
  free_slots_.push_back(st.slot);
}

TxnCounters RedoEngine::counters() const {
  std::lock_guard lk(mu_);
  return counters_;
}

void RedoEngine::close() {
  std::lock_guard lk(mu_);
  if (free_slots_.size() != pool_.slot_count())
    raise(Errc::state, "transactions still open");
  if (activated_) {
    pool_.set_clean_shutdown(true);
    activated_ = false;
  }
}

}  // namespace pmkit
