#include "pmkit/named_heap.hpp"

#include <cstring>

#include "pmkit/bytes.hpp"
#include "pmkit/crc.hpp"
#include "pmkit/errors.hpp"
#include "pmkit/layout.hpp"

namespace pmkit {

namespace L = layout;

namespace {

void check_name(std::string_view name) {
  if (name.empty() || name.size() >= L::kNameMax)
    raise(Errc::range, "name must be 1 to 31 bytes");
  if (name.find('\0') != std::string_view::npos)
    raise(Errc::range, "name must not contain NUL");
}

constexpr std::uint64_t kPageRecordBytes = L::kPageRecordHeader + L::kPageSize;

}  // namespace

NamedSession::NamedSession(Pool& pool) : pool_(pool), dom_(pool.domain()) {
  if (pool.backend() != Backend::named)
    raise(Errc::config, "pool was not created for named allocation");
  region_ = pool.log_region();
  catalog_ = region_ + L::kPageSize;
  std::uint64_t cat_bytes = pool.catalog_capacity() * L::kCatalogEntryBytes;
  area_ = catalog_ + (cat_bytes + L::kPageSize - 1) / L::kPageSize * L::kPageSize;
  area_end_ = pool.size();
  if (area_ + L::kEpochHeaderBytes + kPageRecordBytes + L::kEpochMarkerBytes >
      area_end_)
    raise(Errc::corruption, "catalog leaves no room for checkpoints");
  recover();
}

std::uint64_t NamedSession::entry_off(std::uint64_t slot) const {
  return catalog_ + slot * L::kCatalogEntryBytes;
}

// Epochs may restore object-space pages and catalog pages, nothing else.
bool NamedSession::replay_target_ok(std::uint64_t page) const {
  std::uint64_t start = page * L::kPageSize;
  std::uint64_t end = start + L::kPageSize;
  if (end <= region_) return true;
  return start >= catalog_ && end <= area_;
}

void NamedSession::discard_epoch() {
  std::byte zero[L::kEpochHeaderBytes] = {};
  dom_.store(area_, zero);
  dom_.flush(area_, L::kEpochHeaderBytes);
  dom_.fence();
}

void NamedSession::recover() {
  next_epoch_ = dom_.load_u64(region_ + L::kNamedNextEpochOff);
  if (next_epoch_ == 0) raise(Errc::corruption, "epoch counter is unset");

  std::uint64_t id = dom_.load_u64(area_);
  if (id != 0 && id != next_epoch_) {
    // A retired epoch whose area was not wiped yet; its pages are already
    // home, so only the wipe is repeated.
    discard_epoch();
    recovery_.discarded += 1;
  } else if (id == next_epoch_) {
    std::uint64_t pc = dom_.load_u64(area_ + 8);
    std::uint64_t max_pc = (area_end_ - area_ - L::kEpochHeaderBytes -
                            L::kEpochMarkerBytes) /
                           kPageRecordBytes;
    if (pc > max_pc)
      raise(Errc::corruption, "epoch claims more pages than the area holds");

    std::uint64_t marker = area_ + L::kEpochHeaderBytes + pc * kPageRecordBytes;
    std::byte payload[16];
    dom_.read(marker + 8, payload);
    bool ok = dom_.load_u32(marker) == L::kEpochMarkerTag &&
              dom_.load_u32(marker + 4) == crc32_of(payload) &&
              bytes::load_u64(payload) == id &&
              bytes::load_u64(payload + 8) == pc;
    if (!ok) {
      discard_epoch();
      recovery_.discarded += 1;
    } else {
      // Committed epoch: everything inside must check out, then it applies.
      struct Page {
        std::uint64_t index;
        std::uint64_t payload;
      };
      std::vector<Page> pages;
      std::uint64_t pos = area_ + L::kEpochHeaderBytes;
      for (std::uint64_t i = 0; i < pc; ++i) {
        std::uint64_t pidx = dom_.load_u64(pos);
        std::uint32_t pcrc = dom_.load_u32(pos + 8);
        if (!replay_target_ok(pidx))
          raise(Errc::corruption, "checkpoint page targets the epoch area");
        std::span<const std::byte> body{
            dom_.data() + pos + L::kPageRecordHeader, L::kPageSize};
        if (pcrc != crc32_of(body))
          raise(Errc::corruption, "checkpoint page checksum failure");
        pages.push_back(Page{pidx, pos + L::kPageRecordHeader});
        pos += kPageRecordBytes;
      }
      for (const Page& p : pages) {
        std::vector<std::byte> buf(L::kPageSize);
        dom_.read(p.payload, buf);
        dom_.store(p.index * L::kPageSize, buf);
        dom_.flush(p.index * L::kPageSize, L::kPageSize);
      }
      dom_.fence();  // homes land before the epoch looks consumed
      dom_.store_u64(region_ + L::kNamedNextEpochOff, id + 1);
      dom_.flush(region_, 8);
      dom_.fence();
      discard_epoch();
      next_epoch_ = id + 1;
      recovery_.replayed += 1;
    }
  }

  // Load the catalog: a zero first name byte marks a free slot.
  for (std::uint64_t slot = 0; slot < pool_.catalog_capacity(); ++slot) {
    std::byte buf[L::kCatalogEntryBytes];
    dom_.read(entry_off(slot), buf);
    if (buf[0] == std::byte{0}) {
      free_slots_.push_back(slot);
      continue;
    }
    std::uint32_t want = bytes::load_u32(buf + 48);
    if (want != crc32_of(std::span<const std::byte>{buf, 48}))
      raise(Errc::corruption, "catalog entry checksum failure");
    const char* raw = reinterpret_cast<const char*>(buf);
    std::size_t len = ::strnlen(raw, L::kNameMax);
    if (len >= L::kNameMax)
      raise(Errc::corruption, "catalog entry with an unterminated name");
    std::uint64_t off = bytes::load_u64(buf + 32);
    std::uint64_t size = bytes::load_u64(buf + 40);
    if (off < L::kHeaderPage + L::kAllocHeaderSize || off >= region_ ||
        size > region_ - off)
      raise(Errc::corruption, "catalog entry points outside the object space");
    if (!bound_.emplace(std::string(raw, len), slot).second)
      raise(Errc::corruption, "catalog binds a name twice");
  }
}

void NamedSession::ensure_active() {
  if (!activated_) {
    pool_.set_clean_shutdown(false);
    activated_ = true;
  }
}

void NamedSession::store_dirty(std::uint64_t off,
                               std::span<const std::byte> data) {
  std::uint64_t first = off / L::kPageSize;
  std::uint64_t last = (off + data.size() - 1) / L::kPageSize;
  for (std::uint64_t p = first; p <= last; ++p) dirty_.insert(p);
  dom_.store(off, data);
}

void NamedSession::write_at(std::uint64_t off, std::span<const std::byte> data) {
  if (data.empty()) return;
  if (off > region_ || data.size() > region_ - off)
    raise(Errc::range, "write outside the object space");
  std::lock_guard lk(mu_);
  ensure_active();
  store_dirty(off, data);
}

void NamedSession::publish(std::string_view name, PRef ref, std::uint64_t size) {
  check_name(name);
  if (ref.is_null() || ref.off < L::kHeaderPage + L::kAllocHeaderSize ||
      ref.off >= region_ || size > region_ - ref.off)
    raise(Errc::invalid_ref, "published object outside the object space");
  std::lock_guard lk(mu_);
  if (bound_.contains(std::string(name)))
    raise(Errc::name_collision, "name is already bound");
  if (free_slots_.empty()) raise(Errc::out_of_space, "catalog full");
  ensure_active();
  std::uint64_t slot = free_slots_.back();

  std::byte buf[L::kCatalogEntryBytes] = {};
  std::memcpy(buf, name.data(), name.size());
  bytes::store_u64(buf + 32, ref.off);
  bytes::store_u64(buf + 40, size);
  bytes::store_u32(buf + 48, crc32_of(std::span<const std::byte>{buf, 48}));
  store_dirty(entry_off(slot), buf);

  free_slots_.pop_back();
  bound_.emplace(std::string(name), slot);
}

void NamedSession::retract(std::string_view name) {
  check_name(name);
  std::lock_guard lk(mu_);
  auto it = bound_.find(std::string(name));
  if (it == bound_.end()) raise(Errc::not_found, "name is not bound");
  ensure_active();
  std::byte zero[L::kCatalogEntryBytes] = {};
  store_dirty(entry_off(it->second), zero);
  free_slots_.push_back(it->second);
  bound_.erase(it);
}

NamedEntry NamedSession::resolve(std::string_view name) {
  check_name(name);
  std::lock_guard lk(mu_);
  stats_.resolutions += 1;
  auto it = bound_.find(std::string(name));
  if (it == bound_.end()) raise(Errc::not_found, "name is not bound");
  std::uint64_t off = entry_off(it->second);
  return NamedEntry{PRef(dom_.load_u64(off + 32)), dom_.load_u64(off + 40)};
}

bool NamedSession::has(std::string_view name) {
  check_name(name);
  std::lock_guard lk(mu_);
  stats_.resolutions += 1;
  return bound_.contains(std::string(name));
}

void NamedSession::checkpoint() {
  std::lock_guard lk(mu_);
  if (dirty_.empty()) return;

  std::uint64_t pc = dirty_.size();
  std::uint64_t need =
      L::kEpochHeaderBytes + pc * kPageRecordBytes + L::kEpochMarkerBytes;
  if (area_ + need > area_end_)
    raise(Errc::checkpoint_failed, "dirty set does not fit the epoch area");

  std::uint64_t id = next_epoch_;
  std::byte hdr[L::kEpochHeaderBytes];
  bytes::store_u64(hdr, id);
  bytes::store_u64(hdr + 8, pc);
  dom_.store(area_, hdr);
  dom_.flush(area_, L::kEpochHeaderBytes);

  std::uint64_t pos = area_ + L::kEpochHeaderBytes;
  std::vector<std::byte> rec(kPageRecordBytes);
  for (std::uint64_t p : dirty_) {
    std::span<const std::byte> body{dom_.data() + p * L::kPageSize,
                                    L::kPageSize};
    bytes::store_u64(rec.data(), p);
    bytes::store_u32(rec.data() + 8, crc32_of(body));
    bytes::store_u32(rec.data() + 12, 0);
    std::memcpy(rec.data() + L::kPageRecordHeader, body.data(), L::kPageSize);
    dom_.store(pos, rec);
    dom_.flush(pos, rec.size());
    pos += rec.size();
    stats_.bytes_logged += L::kPageSize;
  }
  dom_.fence();  // pages durable before the marker

  std::byte mk[L::kEpochMarkerBytes];
  bytes::store_u32(mk, L::kEpochMarkerTag);
  bytes::store_u64(mk + 8, id);
  bytes::store_u64(mk + 16, pc);
  bytes::store_u32(mk + 4, crc32_of(std::span<const std::byte>{mk + 8, 16}));
  dom_.store(pos, mk);
  dom_.flush(pos, L::kEpochMarkerBytes);
  dom_.fence();  // epoch committed

  for (std::uint64_t p : dirty_) dom_.flush(p * L::kPageSize, L::kPageSize);
  dom_.fence();  // home pages durable
  // Only now may the epoch look consumed: if the counter advanced while a
  // home page was still torn, recovery would wrongly skip the replay.
  dom_.store_u64(region_ + L::kNamedNextEpochOff, id + 1);
  dom_.flush(region_, 8);
  dom_.fence();

  std::byte zero[L::kEpochHeaderBytes] = {};
  dom_.store(area_, zero);
  dom_.flush(area_, L::kEpochHeaderBytes);
  dom_.fence();

  next_epoch_ = id + 1;
  dirty_.clear();
  stats_.checkpoints += 1;
}

void NamedSession::close() {
  checkpoint();
  std::lock_guard lk(mu_);
  pool_.set_clean_shutdown(true);
  activated_ = false;
}

NamedStats NamedSession::stats() const {
  std::lock_guard lk(mu_);
  return stats_;
}

std::uint64_t NamedSession::dirty_pages() const {
  std::lock_guard lk(mu_);
  return dirty_.size();
}

}  // namespace pmkit
