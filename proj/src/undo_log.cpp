#include "pmkit/undo_log.hpp"

#include <set>
#include <unordered_map>
#include <utility>

#include "pmkit/errors.hpp"
#include "pmkit/layout.hpp"
#include "pmkit/log_format.hpp"

namespace pmkit {

namespace L = layout;

struct UndoTxn::State final : DurableWriter {
  UndoEngine* eng = nullptr;
  std::uint32_t slot = 0;
  std::uint64_t slot_off = 0;
  std::uint64_t pos = L::kUndoSlotHeader;
  std::uint64_t txn_id = 0;
  bool open = true;
  std::uint64_t bytes_logged = 0;
  std::set<std::uint64_t> units;  // snapshot units already logged
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

UndoTxn::UndoTxn(std::unique_ptr<State> st) : st_(std::move(st)) {}
UndoTxn::UndoTxn(UndoTxn&&) noexcept = default;
UndoTxn& UndoTxn::operator=(UndoTxn&&) noexcept = default;

UndoTxn::~UndoTxn() {
  if (st_ && st_->open) {
    try {
      st_->eng->txn_abort(*st_);
    } catch (...) {
    }
  }
}

void UndoTxn::write(std::uint64_t off, std::span<const std::byte> data) {
  if (!st_ || !st_->open) raise(Errc::state, "transaction is closed");
  st_->eng->txn_write(*st_, off, data);
}

void UndoTxn::commit() {
  if (!st_ || !st_->open) raise(Errc::state, "transaction is closed");
  st_->eng->txn_commit(*st_);
}

void UndoTxn::abort() {
  if (!st_ || !st_->open) raise(Errc::state, "transaction is closed");
  st_->eng->txn_abort(*st_);
}

bool UndoTxn::open() const { return st_ && st_->open; }

DurableWriter& UndoTxn::writer() {
  if (!st_) raise(Errc::state, "moved-from transaction");
  return *st_;
}

UndoEngine::UndoEngine(Pool& pool)
    : pool_(pool), dom_(pool.domain()), unit_(pool.snapshot_unit()) {
  if (pool.backend() != Backend::undo)
    raise(Errc::config, "pool was not created for undo logging");
  recover();
  free_slots_.reserve(pool_.slot_count());
  for (std::uint32_t s = static_cast<std::uint32_t>(pool_.slot_count()); s > 0;
       --s)
    free_slots_.push_back(s - 1);
}

UndoEngine::~UndoEngine() = default;

// Parses rec_bytes of snapshot records and applies them newest-first.
// Checksums must hold: the caller only passes bytes the slot header counts
// as durable, or bytes this process just wrote.
void UndoEngine::rollback_records(std::uint64_t slot_off,
                                  std::uint64_t rec_bytes) {
  struct Rec {
    std::uint64_t home;
    std::uint64_t log_payload;
    std::uint32_t len;
  };
  std::vector<Rec> recs;
  std::uint64_t pos = 0;
  std::uint64_t base = slot_off + L::kUndoSlotHeader;
  while (pos < rec_bytes) {
    if (pos + L::kRecordHeader > rec_bytes)
      raise(Errc::corruption, "undo record truncated inside the durable window");
    logfmt::RecordHead h = logfmt::read_head(dom_.data() + base + pos);
    if (h.tag() != L::kTagUndoSnapshot || h.length != unit_ ||
        h.offset() % unit_ != 0 || h.offset() + unit_ > pool_.log_region())
      raise(Errc::corruption, "undo record is malformed");
    if (pos + L::kRecordHeader + h.length > rec_bytes)
      raise(Errc::corruption, "undo record truncated inside the durable window");
    std::span<const std::byte> payload{
        dom_.data() + base + pos + L::kRecordHeader, h.length};
    if (h.crc != logfmt::body_crc(h.target, h.length, payload))
      raise(Errc::corruption, "undo record checksum failure");
    recs.push_back(Rec{h.offset(), base + pos + L::kRecordHeader, h.length});
    pos += L::kRecordHeader + h.length;
  }
  for (auto it = recs.rbegin(); it != recs.rend(); ++it) {
    std::vector<std::byte> buf(it->len);
    dom_.read(it->log_payload, buf);
    dom_.store(it->home, buf);
    dom_.flush(it->home, it->len);
  }
  if (!recs.empty()) dom_.fence();
}

void UndoEngine::recover() {
  const std::uint64_t region = pool_.log_region();
  const std::uint64_t sbytes = pool_.slot_bytes();
  for (std::uint64_t s = 0; s < pool_.slot_count(); ++s) {
    std::uint64_t so = region + s * sbytes;
    std::uint64_t txn = dom_.load_u64(so);
    if (txn == 0) continue;
    std::uint64_t dlen = dom_.load_u64(so + 8);
    if (dlen > sbytes - L::kUndoSlotHeader - L::kCommitMarkerBytes)
      raise(Errc::corruption, "undo slot claims more bytes than it can hold");

    std::uint64_t marker_off = so + L::kUndoSlotHeader + dlen;
    bool committed = logfmt::marker_valid(dom_.data() + marker_off,
                                          L::kTagUndoCommit, txn);
    if (committed) {
      // Home locations were durable before the marker; nothing to apply.
      recovery_.replayed += 1;
    } else {
      rollback_records(so, dlen);
      recovery_.discarded += 1;
    }
    std::byte zero[L::kUndoSlotHeader] = {};
    dom_.store(so, zero);
    dom_.flush(so, L::kUndoSlotHeader);
    dom_.fence();
  }
}

namespace {
// Flat transactions only, as in the redo engine: one live txn per
// (thread, engine), finished on the thread that began it.
thread_local std::unordered_map<const void*, int> tl_open_txns;
}  // namespace

UndoTxn UndoEngine::begin() {
  if (tl_open_txns[this] > 0)
    raise(Errc::nesting, "this thread already has an open transaction");
  auto st = std::make_unique<UndoTxn::State>();
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
  std::byte hdr[L::kUndoSlotHeader];
  bytes::store_u64(hdr, st->txn_id);
  bytes::store_u64(hdr + 8, 0);
  dom_.store(st->slot_off, hdr);
  dom_.flush(st->slot_off, L::kUndoSlotHeader);
  tl_open_txns[this] += 1;
  return UndoTxn(std::move(st));
}

void UndoEngine::txn_write(UndoTxn::State& st, std::uint64_t off,
                           std::span<const std::byte> data) {
  if (!st.open) raise(Errc::state, "transaction is closed");
  if (data.empty()) return;
  if (off > pool_.log_region() || data.size() > pool_.log_region() - off)
    raise(Errc::range, "write outside the object space");

  std::uint64_t ustart = off & ~(unit_ - 1);
  std::uint64_t uend = off + data.size();
  std::vector<std::uint64_t> fresh;
  for (std::uint64_t u = ustart; u < uend; u += unit_)
    if (!st.units.contains(u)) fresh.push_back(u);

  if (!fresh.empty()) {
    std::uint64_t need = fresh.size() * (L::kRecordHeader + unit_);
    if (st.pos + need + L::kCommitMarkerBytes > pool_.slot_bytes()) {
      txn_abort(st);  // rolls the earlier in-place stores back
      raise(Errc::out_of_log, "log slot full");
    }
    for (std::uint64_t u : fresh) {
      std::span<const std::byte> pre{dom_.data() + u, unit_};
      std::vector<std::byte> rec =
          logfmt::encode_record(L::kTagUndoSnapshot, u, pre);
      dom_.store(st.slot_off + st.pos, rec);
      dom_.flush(st.slot_off + st.pos, rec.size());
      st.pos += rec.size();
      st.bytes_logged += rec.size();
      st.units.insert(u);
    }
    dom_.fence();  // snapshots durable before the durable window admits them
    dom_.store_u64(st.slot_off + 8, st.pos - L::kUndoSlotHeader);
    dom_.flush(st.slot_off + 8, 8);
    dom_.fence();  // window durable before the home bytes change
  }

  dom_.store(off, data);
  dom_.flush(off, data.size());
}

void UndoEngine::txn_commit(UndoTxn::State& st) {
  if (!st.open) raise(Errc::state, "transaction is closed");
  dom_.fence();  // all in-place stores durable

  std::vector<std::byte> marker =
      logfmt::encode_marker(L::kTagUndoCommit, st.txn_id);
  dom_.store(st.slot_off + st.pos, marker);
  dom_.flush(st.slot_off + st.pos, marker.size());
  dom_.fence();  // commit point
  st.bytes_logged += marker.size();

  std::byte zero[L::kUndoSlotHeader] = {};
  dom_.store(st.slot_off, zero);
  dom_.flush(st.slot_off, L::kUndoSlotHeader);
  dom_.fence();
  finish(st, true);
}

void UndoEngine::txn_abort(UndoTxn::State& st) {
  if (!st.open) raise(Errc::state, "transaction is closed");
  rollback_records(st.slot_off, st.pos - L::kUndoSlotHeader);
  std::byte zero[L::kUndoSlotHeader] = {};
  dom_.store(st.slot_off, zero);
  dom_.flush(st.slot_off, L::kUndoSlotHeader);
  dom_.fence();
  finish(st, false);
}

void UndoEngine::finish(UndoTxn::State& st, bool committed) {
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

TxnCounters UndoEngine::counters() const {
  std::lock_guard lk(mu_);
  return counters_;
}

void UndoEngine::close() {
  std::lock_guard lk(mu_);
  if (free_slots_.size() != pool_.slot_count())
    raise(Errc::state, "transactions still open");
  if (activated_) {
    pool_.set_clean_shutdown(true);
    activated_ = false;
  }
}

}  // namespace pmkit
