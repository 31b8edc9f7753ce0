#include "pmkit/pool.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#include "pmkit/bytes.hpp"
#include "pmkit/errors.hpp"
#include "pmkit/layout.hpp"

namespace pmkit {

namespace L = layout;

namespace {

void write_u64(DurableWriter& w, std::uint64_t off, std::uint64_t v) {
  std::byte buf[8];
  bytes::store_u64(buf, v);
  w.write_at(off, buf);
}

// size, state and next_free in one store; the 8 pad bytes are never written.
void write_block_header(DurableWriter& w, std::uint64_t hdr, std::uint64_t size,
                        std::uint64_t state, std::uint64_t next) {
  std::byte buf[24];
  bytes::store_u64(buf, size);
  bytes::store_u64(buf + 8, state);
  bytes::store_u64(buf + 16, next);
  w.write_at(hdr, buf);
}

}  // namespace

std::unique_ptr<Pool> Pool::create(std::unique_ptr<PersistDomain> dom,
                                   const PoolConfig& cfg) {
  if (!dom) raise(Errc::config, "pool needs a domain");
  if (cfg.pool_size != dom->size())
    raise(Errc::config, "pool size does not match the domain");
  if (cfg.pool_size % L::kPageSize != 0)
    raise(Errc::config, "pool size must be a multiple of 4096");

  std::uint64_t log_bytes = 0;
  switch (cfg.backend) {
    case Backend::redo:
    case Backend::undo:
      if (cfg.slot_bytes < L::kPageSize || cfg.slot_bytes % L::kPageSize != 0)
        raise(Errc::config, "log slot size must be a positive multiple of 4096");
      if (cfg.slot_count == 0) raise(Errc::config, "need at least one log slot");
      log_bytes = cfg.slot_bytes * cfg.slot_count;
      break;
    case Backend::named:
      if (cfg.named_region_bytes % L::kPageSize != 0 ||
          cfg.named_region_bytes < 16 * L::kPageSize)
        raise(Errc::config, "named region must be a multiple of 4096, at least 64K");
      if (cfg.catalog_capacity == 0)
        raise(Errc::config, "catalog capacity must be positive");
      {
        std::uint64_t catalog_pages =
            (cfg.catalog_capacity * L::kCatalogEntryBytes + L::kPageSize - 1) /
            L::kPageSize;
        std::uint64_t min_epoch = L::kEpochHeaderBytes + L::kPageRecordHeader +
                                  L::kPageSize + L::kEpochMarkerBytes;
        if ((1 + catalog_pages) * L::kPageSize + min_epoch >
            cfg.named_region_bytes)
          raise(Errc::config, "named region too small for its catalog");
      }
      log_bytes = cfg.named_region_bytes;
      break;
    default:
      raise(Errc::config, "unknown backend");
  }
  if (cfg.backend == Backend::undo && cfg.snapshot_unit != 64 &&
      cfg.snapshot_unit != 256 && cfg.snapshot_unit != 4096)
    raise(Errc::config, "snapshot unit must be 64, 256 or 4096");
  if (log_bytes + L::kHeaderPage + L::kAllocHeaderSize + L::kAllocAlign >
      cfg.pool_size)
    raise(Errc::config, "pool too small for its log region");

  std::uint64_t log_region = cfg.pool_size - log_bytes;

  auto pool = std::unique_ptr<Pool>(new Pool());
  pool->dom_ = std::move(dom);
  pool->backend_ = cfg.backend;
  pool->size_ = cfg.pool_size;
  pool->log_region_ = log_region;
  pool->slot_bytes_ = cfg.slot_bytes;
  pool->slot_count_ = cfg.slot_count;
  pool->snapshot_unit_ = cfg.snapshot_unit;
  pool->catalog_capacity_ = cfg.catalog_capacity;
  pool->session_ = 1;

  PersistDomain& d = *pool->dom_;
  d.store_u32(L::kVersionOff, L::kVersion);
  d.store_u32(L::kBackendOff, static_cast<std::uint32_t>(cfg.backend));
  d.store_u64(L::kPoolSizeOff, cfg.pool_size);
  d.store_u64(L::kRootOff, 0);
  d.store_u64(L::kAllocMetaOff, L::kFreeListHeadOff);
  d.store_u64(L::kLogRegionOff, log_region);
  std::byte clean{1};
  d.store(L::kCleanFlagOff, {&clean, 1});

  std::uint64_t first_payload = L::kHeaderPage + L::kAllocHeaderSize;
  d.store_u64(L::kFreeListHeadOff, first_payload);
  d.store_u64(L::kSlotBytesOff, cfg.slot_bytes);
  d.store_u64(L::kSlotCountOff, cfg.slot_count);
  d.store_u64(L::kSnapshotUnitOff, cfg.snapshot_unit);
  d.store_u64(L::kCatalogCapOff, cfg.catalog_capacity);
  d.store_u64(L::kSessionCounterOff, 1);

  d.store_u64(L::kHeaderPage + L::kAllocSizeOff,
              log_region - first_payload);
  d.store_u64(L::kHeaderPage + L::kAllocStateOff, L::kAllocFree);
  d.store_u64(L::kHeaderPage + L::kAllocNextFreeOff, 0);

  d.flush(0, L::kSessionCounterOff + 8);
  d.flush(L::kHeaderPage, L::kAllocHeaderSize);
  if (cfg.backend == Backend::named) {
    d.store_u64(log_region + L::kNamedNextEpochOff, 1);
    d.flush(log_region, 8);
  }
  d.fence();
  // The magic goes down last so a torn creation is never mistaken for a
  // pool: either open() refuses the image, or every other field is already
  // durable.
  d.store(L::kMagicOff, std::as_bytes(std::span{L::kMagic}));
  d.flush(L::kMagicOff, sizeof L::kMagic);
  d.fence();
  return pool;
}

std::unique_ptr<Pool> Pool::open(std::unique_ptr<PersistDomain> dom) {
  if (!dom) raise(Errc::config, "pool needs a domain");
  PersistDomain& d = *dom;
  if (d.size() < L::kHeaderPage) raise(Errc::corruption, "image too small");
  if (std::memcmp(d.data() + L::kMagicOff, L::kMagic, sizeof L::kMagic) != 0)
    raise(Errc::corruption, "bad pool magic");
  if (d.load_u32(L::kVersionOff) != L::kVersion)
    raise(Errc::corruption, "unsupported pool version");
  std::uint32_t tag = d.load_u32(L::kBackendOff);
  if (tag > 2) raise(Errc::corruption, "unknown backend tag");
  if (d.load_u64(L::kPoolSizeOff) != d.size())
    raise(Errc::corruption, "pool size field does not match the image");
  if (d.load_u64(L::kAllocMetaOff) != L::kFreeListHeadOff)
    raise(Errc::corruption, "unexpected allocator metadata location");
  std::uint64_t log_region = d.load_u64(L::kLogRegionOff);
  if (log_region <= L::kHeaderPage || log_region > d.size() ||
      log_region % L::kPageSize != 0)
    raise(Errc::corruption, "log region out of bounds");

  auto pool = std::unique_ptr<Pool>(new Pool());
  pool->backend_ = static_cast<Backend>(tag);
  pool->size_ = d.size();
  pool->log_region_ = log_region;
  pool->slot_bytes_ = d.load_u64(L::kSlotBytesOff);
  pool->slot_count_ = d.load_u64(L::kSlotCountOff);
  pool->snapshot_unit_ = d.load_u64(L::kSnapshotUnitOff);
  pool->catalog_capacity_ = d.load_u64(L::kCatalogCapOff);
  pool->session_ = d.load_u64(L::kSessionCounterOff);

  if (pool->backend_ != Backend::named) {
    if (pool->slot_bytes_ == 0 || pool->slot_count_ == 0 ||
        pool->slot_bytes_ * pool->slot_count_ != d.size() - log_region)
      raise(Errc::corruption, "log slot geometry does not cover the log region");
  }
  if (pool->backend_ == Backend::undo && pool->snapshot_unit_ != 64 &&
      pool->snapshot_unit_ != 256 && pool->snapshot_unit_ != 4096)
    raise(Errc::corruption, "invalid snapshot unit");

  pool->dom_ = std::move(dom);
  return pool;
}

PRef Pool::root() const { return PRef(dom_->load_u64(L::kRootOff)); }

void Pool::set_root(PRef ref, DurableWriter& w) {
  if (ref) validate_ref(ref);  // a dangling root would poison every reopen
  write_u64(w, L::kRootOff, ref.off);
}

std::uint64_t Pool::free_head() const {
  return dom_->load_u64(L::kFreeListHeadOff);
}

PRef Pool::alloc(std::uint64_t size, DurableWriter& w) {
  if (size == 0) raise(Errc::range, "zero-size allocation");
  std::uint64_t rounded = (std::max<std::uint64_t>(size, L::kAllocAlign) +
                           L::kAllocAlign - 1) &
                          ~(L::kAllocAlign - 1);
  bool held = w.acquire_allocator(*this);
  std::unique_lock<std::mutex> lk(alloc_mu_, std::defer_lock);
  if (!held) lk.lock();

  std::uint64_t max_iter = (log_region_ - L::kHeaderPage) / 48 + 2;
  std::uint64_t prev = 0;
  std::uint64_t cur = free_head();
  std::uint64_t guard = 0;
  while (cur != 0) {
    if (++guard > max_iter) raise(Errc::corruption, "free list does not end");
    if (dom_->load_u64(cur - L::kAllocHeaderSize) >= rounded) break;
    prev = cur;
    cur = dom_->load_u64(cur - L::kAllocHeaderSize + L::kAllocNextFreeOff);
  }
  if (cur == 0) raise(Errc::out_of_space, "no free block fits");

  std::uint64_t hdr = cur - L::kAllocHeaderSize;
  std::uint64_t bsize = dom_->load_u64(hdr);
  std::uint64_t next = dom_->load_u64(hdr + L::kAllocNextFreeOff);

  std::uint64_t link;
  std::uint64_t got;
  if (bsize - rounded >= L::kAllocHeaderSize + L::kAllocAlign) {
    std::uint64_t split_hdr = cur + rounded;
    write_block_header(w, split_hdr, bsize - rounded - L::kAllocHeaderSize,
                       L::kAllocFree, next);
    write_block_header(w, hdr, rounded, L::kAllocLive, 0);
    link = split_hdr + L::kAllocHeaderSize;
    got = rounded;
  } else {
    write_block_header(w, hdr, bsize, L::kAllocLive, 0);
    link = next;
    got = bsize;
  }
  if (prev != 0)
    write_u64(w, prev - L::kAllocHeaderSize + L::kAllocNextFreeOff, link);
  else
    write_u64(w, L::kFreeListHeadOff, link);

  std::vector<std::byte> zeros(got, std::byte{0});
  w.write_at(cur, zeros);
  return PRef(cur);
}

void Pool::free(PRef ref, DurableWriter& w) {
  if (ref.is_null()) raise(Errc::invalid_free, "free of null");
  if (ref.off % L::kAllocAlign != 0 ||
      ref.off < L::kHeaderPage + L::kAllocHeaderSize || ref.off >= log_region_)
    raise(Errc::invalid_free, "reference outside the object space");

  bool held = w.acquire_allocator(*this);
  std::unique_lock<std::mutex> lk(alloc_mu_, std::defer_lock);
  if (!held) lk.lock();

  std::uint64_t hdr = ref.off - L::kAllocHeaderSize;
  if (dom_->load_u64(hdr + L::kAllocStateOff) != L::kAllocLive)
    raise(Errc::invalid_free, "block is not live");
  std::uint64_t bsize = dom_->load_u64(hdr);
  if (bsize % L::kAllocAlign != 0 || ref.off + bsize > log_region_)
    raise(Errc::corruption, "block size out of bounds");

  std::uint64_t max_iter = (log_region_ - L::kHeaderPage) / 48 + 2;
  std::uint64_t prev = 0;
  std::uint64_t cur = free_head();
  std::uint64_t guard = 0;
  while (cur != 0 && cur < ref.off) {
    if (++guard > max_iter) raise(Errc::corruption, "free list does not end");
    prev = cur;
    cur = dom_->load_u64(cur - L::kAllocHeaderSize + L::kAllocNextFreeOff);
  }
  if (cur == ref.off) raise(Errc::invalid_free, "block already free");

  // Absorb a free successor that starts right at this block's end.
  std::uint64_t merged_size = bsize;
  std::uint64_t merged_next = cur;
  if (cur != 0 && cur == ref.off + bsize + L::kAllocHeaderSize) {
    merged_size = bsize + L::kAllocHeaderSize +
                  dom_->load_u64(cur - L::kAllocHeaderSize);
    merged_next =
        dom_->load_u64(cur - L::kAllocHeaderSize + L::kAllocNextFreeOff);
  }

  std::uint64_t prev_size =
      prev != 0 ? dom_->load_u64(prev - L::kAllocHeaderSize) : 0;
  if (prev != 0 && prev + prev_size == hdr) {
    // This block begins right at the predecessor's end: grow it in place.
    write_block_header(w, prev - L::kAllocHeaderSize,
                       prev_size + L::kAllocHeaderSize + merged_size,
                       L::kAllocFree, merged_next);
  } else {
    write_block_header(w, hdr, merged_size, L::kAllocFree, merged_next);
    if (prev != 0)
      write_u64(w, prev - L::kAllocHeaderSize + L::kAllocNextFreeOff, ref.off);
    else
      write_u64(w, L::kFreeListHeadOff, ref.off);
  }
}

std::uint64_t Pool::payload_size(PRef ref) const {
  validate_ref(ref);
  return dom_->load_u64(ref.off - L::kAllocHeaderSize);
}

void Pool::validate_ref(PRef ref) const {
  if (ref.is_null()) raise(Errc::invalid_ref, "null reference");
  if (ref.off % L::kAllocAlign != 0 ||
      ref.off < L::kHeaderPage + L::kAllocHeaderSize || ref.off >= log_region_)
    raise(Errc::invalid_ref, "reference outside the object space");
  std::uint64_t hdr = ref.off - L::kAllocHeaderSize;
  if (dom_->load_u64(hdr + L::kAllocStateOff) != L::kAllocLive)
    raise(Errc::invalid_ref, "reference to a dead block");
  std::uint64_t bsize = dom_->load_u64(hdr);
  if (bsize % L::kAllocAlign != 0 || ref.off + bsize > log_region_)
    raise(Errc::invalid_ref, "block size out of bounds");
}

Pool::AuditReport Pool::audit() const {
  AuditReport rep;
  std::vector<std::uint64_t> tiled_free;

  std::uint64_t b = L::kHeaderPage;
  std::uint64_t last_state = L::kAllocLive;
  while (b < log_region_) {
    if (b + L::kAllocHeaderSize > log_region_)
      raise(Errc::corruption, "block header past the object space");
    std::uint64_t size = dom_->load_u64(b + L::kAllocSizeOff);
    std::uint64_t state = dom_->load_u64(b + L::kAllocStateOff);
    if (size < L::kAllocAlign || size % L::kAllocAlign != 0 ||
        b + L::kAllocHeaderSize + size > log_region_)
      raise(Errc::corruption, "block does not tile the object space");
    if (state == L::kAllocLive) {
      rep.live_blocks += 1;
      rep.live_bytes += size;
    } else if (state == L::kAllocFree) {
      if (last_state == L::kAllocFree)
        raise(Errc::corruption, "adjacent free blocks left uncoalesced");
      rep.free_blocks += 1;
      rep.free_bytes += size;
      tiled_free.push_back(b + L::kAllocHeaderSize);
    } else {
      raise(Errc::corruption, "block with unknown state");
    }
    last_state = state;
    b += L::kAllocHeaderSize + size;
  }
  if (b != log_region_)
    raise(Errc::corruption, "blocks do not end at the log region");

  std::vector<std::uint64_t> listed;
  std::uint64_t cur = free_head();
  std::uint64_t guard = 0;
  std::uint64_t max_iter = (log_region_ - L::kHeaderPage) / 48 + 2;
  while (cur != 0) {
    if (++guard > max_iter) raise(Errc::corruption, "free list does not end");
    if (!listed.empty() && listed.back() >= cur)
      raise(Errc::corruption, "free list not in address order");
    listed.push_back(cur);
    cur = dom_->load_u64(cur - L::kAllocHeaderSize + L::kAllocNextFreeOff);
  }
  if (listed != tiled_free)
    raise(Errc::corruption, "free list does not match the free blocks");
  return rep;
}

bool Pool::clean_shutdown() const {
  return dom_->data()[L::kCleanFlagOff] != std::byte{0};
}

void Pool::set_clean_shutdown(bool clean) {
  std::byte b{clean ? std::uint8_t{1} : std::uint8_t{0}};
  dom_->store(L::kCleanFlagOff, {&b, 1});
  dom_->flush(L::kCleanFlagOff, 1);
  dom_->fence();
}

void Pool::bump_session() {
  session_ += 1;
  dom_->store_u64(L::kSessionCounterOff, session_);
  dom_->flush(L::kSessionCounterOff, 8);
  dom_->fence();
}

}  // namespace pmkit
