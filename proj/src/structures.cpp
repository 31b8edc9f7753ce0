#include "pmkit/structure.hpp"

#include <algorithm>
#include <cstring>

#include "pmkit/bytes.hpp"
#include "pmkit/errors.hpp"
#include "pmkit/layout.hpp"

namespace pmkit {

namespace {

constexpr std::int64_t kHeadKey = INT64_MIN;
constexpr std::int64_t kTailKey = INT64_MAX;
constexpr std::uint64_t kKindSet = 1;
constexpr std::uint64_t kKindChained = 2;
constexpr std::uint64_t kKindProbe = 3;

// Sorted-set node payload: key i64, value u64, next u64.
constexpr std::uint64_t kNodeBytes = 24;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

void txn_u64(AnyTxn& t, std::uint64_t off, std::uint64_t v) {
  std::byte buf[8];
  bytes::store_u64(buf, v);
  t.write(off, buf);
}

void txn_node(AnyTxn& t, std::uint64_t ref, std::int64_t key,
              std::uint64_t value, std::uint64_t next) {
  std::byte buf[kNodeBytes];
  bytes::store_i64(buf, key);
  bytes::store_u64(buf + 8, value);
  bytes::store_u64(buf + 16, next);
  t.write(ref, buf);
}

void check_user_key(std::int64_t key) {
  if (key == kHeadKey || key == kTailKey)
    raise(Errc::range, "key collides with a sentinel");
}

// Builds one sentinel pair inside the running transaction and returns the
// head reference.
std::uint64_t make_sentinels(Pool& pool, AnyTxn& t) {
  PRef tail = pool.alloc(kNodeBytes, t.writer());
  PRef head = pool.alloc(kNodeBytes, t.writer());
  txn_node(t, tail.off, kTailKey, 0, 0);
  txn_node(t, head.off, kHeadKey, 0, tail.off);
  return head.off;
}

// Shared walk/validate for one sentinel-bounded sorted chain. Returns the
// interior (key, value) pairs.
std::vector<std::pair<std::int64_t, std::uint64_t>> walk_chain(
    const Pool& pool, std::uint64_t head) {
  const PersistDomain& d = pool.domain();
  std::vector<std::pair<std::int64_t, std::uint64_t>> items;
  pool.validate_ref(PRef(head));
  if (d.load_i64(head) != kHeadKey)
    raise(Errc::corruption, "chain head is not a sentinel");
  std::uint64_t max_iter = pool.log_region() / (kNodeBytes + 8) + 2;
  std::int64_t prev = kHeadKey;
  std::uint64_t cur = d.load_u64(head + 16);
  std::uint64_t steps = 0;
  for (;;) {
    if (++steps > max_iter) raise(Errc::corruption, "chain does not terminate");
    pool.validate_ref(PRef(cur));
    if (pool.payload_size(PRef(cur)) < kNodeBytes)
      raise(Errc::corruption, "chain node is too small");
    std::int64_t k = d.load_i64(cur);
    if (k == kTailKey) {
      if (d.load_u64(cur + 16) != 0)
        raise(Errc::corruption, "tail sentinel has a successor");
      break;
    }
    if (k <= prev) raise(Errc::corruption, "chain keys out of order");
    items.emplace_back(k, d.load_u64(cur + 8));
    prev = k;
    cur = d.load_u64(cur + 16);
  }
  return items;
}

// ---------------------------------------------------------------------------

class SortedSet final : public IStructure {
 public:
  SortedSet(TxnBackend& be, LockRegistry& locks, LockMode mode)
      : be_(be), pool_(be.pool()), dom_(be.pool().domain()), locks_(locks),
        mode_(mode) {}

  void create() {
    if (pool_.root()) raise(Errc::state, "pool already holds a structure");
    auto t = be_.begin();
    PRef root = pool_.alloc(16, t->writer());
    std::uint64_t head = make_sentinels(pool_, *t);
    txn_u64(*t, root.off, kKindSet);
    txn_u64(*t, root.off + 8, head);
    pool_.set_root(root, t->writer());
    t->commit();
    root_ = root.off;
    head_ = head;
  }

  void attach() {
    PRef root = pool_.root();
    if (!root) raise(Errc::state, "pool holds no structure");
    pool_.validate_ref(root);
    if (dom_.load_u64(root.off) != kKindSet)
      raise(Errc::corruption, "root is not a sorted set");
    root_ = root.off;
    head_ = dom_.load_u64(root.off + 8);
    pool_.validate_ref(PRef(head_));
  }

  bool add(std::int64_t key, std::uint64_t value) override {
    check_user_key(key);
    if (mode_ == LockMode::coarse) {
      std::lock_guard lk(locks_.get(root_));
      auto [pred, cur] = seek(head_, key);
      return do_add(pred, cur, key, value);
    }
    auto [pl, cl, pred, cur] = seek_coupled(head_, key);
    return do_add(pred, cur, key, value);
  }

  bool remove(std::int64_t key) override {
    check_user_key(key);
    if (mode_ == LockMode::coarse) {
      std::lock_guard lk(locks_.get(root_));
      auto [pred, cur] = seek(head_, key);
      return do_remove(pred, cur, key);
    }
    auto [pl, cl, pred, cur] = seek_coupled(head_, key);
    return do_remove(pred, cur, key);
  }

  std::optional<std::uint64_t> find(std::int64_t key) override {
    check_user_key(key);
    if (mode_ == LockMode::coarse) {
      std::lock_guard lk(locks_.get(root_));
      auto [pred, cur] = seek(head_, key);
      (void)pred;
      if (dom_.load_i64(cur) != key) return std::nullopt;
      return dom_.load_u64(cur + 8);
    }
    auto [pl, cl, pred, cur] = seek_coupled(head_, key);
    (void)pred;
    if (dom_.load_i64(cur) != key) return std::nullopt;
    return dom_.load_u64(cur + 8);
  }

  std::vector<std::pair<std::int64_t, std::uint64_t>> snapshot() override {
    return walk_chain(pool_, head_);
  }

  void verify() override {
    pool_.validate_ref(PRef(root_));
    if (dom_.load_u64(root_) != kKindSet)
      raise(Errc::corruption, "root is not a sorted set");
    walk_chain(pool_, dom_.load_u64(root_ + 8));
  }

 private:
  // Plain walk to the first node with node.key >= key.
  std::pair<std::uint64_t, std::uint64_t> seek(std::uint64_t head,
                                               std::int64_t key) {
    std::uint64_t pred = head;
    std::uint64_t cur = dom_.load_u64(head + 16);
    while (dom_.load_i64(cur) < key) {
      pred = cur;
      cur = dom_.load_u64(cur + 16);
    }
    return {pred, cur};
  }

  struct Coupled {
    std::unique_lock<std::mutex> pl, cl;
    std::uint64_t pred, cur;
  };

  // Lock-coupled walk: both returned locks stay held.
  Coupled seek_coupled(std::uint64_t head, std::int64_t key) {
    std::unique_lock pl(locks_.get(head));
    std::uint64_t pred = head;
    std::uint64_t cur = dom_.load_u64(head + 16);
    std::unique_lock cl(locks_.get(cur));
    while (dom_.load_i64(cur) < key) {
      std::uint64_t nxt = dom_.load_u64(cur + 16);
      std::unique_lock nl(locks_.get(nxt));
      pl = std::move(cl);
      cl = std::move(nl);
      pred = cur;
      cur = nxt;
    }
    return {std::move(pl), std::move(cl), pred, cur};
  }

  bool do_add(std::uint64_t pred, std::uint64_t cur, std::int64_t key,
              std::uint64_t value) {
    if (dom_.load_i64(cur) == key) return false;
    auto t = be_.begin();
    PRef node = pool_.alloc(kNodeBytes, t->writer());
    txn_node(*t, node.off, key, value, cur);
    txn_u64(*t, pred + 16, node.off);
    t->commit();
    return true;
  }

  bool do_remove(std::uint64_t pred, std::uint64_t cur, std::int64_t key) {
    if (dom_.load_i64(cur) != key) return false;
    auto t = be_.begin();
    txn_u64(*t, pred + 16, dom_.load_u64(cur + 16));
    pool_.free(PRef(cur), t->writer());
    t->commit();
    return true;
  }

  TxnBackend& be_;
  Pool& pool_;
  PersistDomain& dom_;
  LockRegistry& locks_;
  LockMode mode_;
  std::uint64_t root_ = 0;
  std::uint64_t head_ = 0;
};

// ---------------------------------------------------------------------------

class ChainedTable final : public IStructure {
 public:
  ChainedTable(TxnBackend& be, LockRegistry& locks, LockMode mode)
      : be_(be), pool_(be.pool()), dom_(be.pool().domain()), locks_(locks),
        mode_(mode) {}

  void create(std::uint64_t buckets) {
    if (pool_.root()) raise(Errc::state, "pool already holds a structure");
    if (buckets == 0 || (buckets & (buckets - 1)) != 0)
      raise(Errc::config, "bucket count must be a power of two");
    auto t = be_.begin();
    PRef root = pool_.alloc(16 + 8 * buckets, t->writer());
    txn_u64(*t, root.off, kKindChained);
    txn_u64(*t, root.off + 8, buckets);
    heads_.resize(buckets);
    for (std::uint64_t b = 0; b < buckets; ++b) {
      heads_[b] = make_sentinels(pool_, *t);
      txn_u64(*t, root.off + 16 + 8 * b, heads_[b]);
    }
    pool_.set_root(root, t->writer());
    t->commit();
    root_ = root.off;
    buckets_ = buckets;
  }

  void attach() {
    PRef root = pool_.root();
    if (!root) raise(Errc::state, "pool holds no structure");
    pool_.validate_ref(root);
    if (dom_.load_u64(root.off) != kKindChained)
      raise(Errc::corruption, "root is not a chained table");
    root_ = root.off;
    buckets_ = dom_.load_u64(root.off + 8);
    if (buckets_ == 0 || (buckets_ & (buckets_ - 1)) != 0 ||
        pool_.payload_size(root) < 16 + 8 * buckets_)
      raise(Errc::corruption, "chained table geometry is invalid");
    heads_.resize(buckets_);
    for (std::uint64_t b = 0; b < buckets_; ++b) {
      heads_[b] = dom_.load_u64(root.off + 16 + 8 * b);
      pool_.validate_ref(PRef(heads_[b]));
    }
  }

  bool add(std::int64_t key, std::uint64_t value) override {
    check_user_key(key);
    std::uint64_t head = heads_[bucket(key)];
    std::lock_guard lk(locks_.get(mode_ == LockMode::coarse ? root_ : head));
    std::uint64_t pred = head;
    std::uint64_t cur = dom_.load_u64(head + 16);
    while (dom_.load_i64(cur) < key) {
      pred = cur;
      cur = dom_.load_u64(cur + 16);
    }
    if (dom_.load_i64(cur) == key) return false;
    auto t = be_.begin();
    PRef node = pool_.alloc(kNodeBytes, t->writer());
    txn_node(*t, node.off, key, value, cur);
    txn_u64(*t, pred + 16, node.off);
    t->commit();
    return true;
  }

  bool remove(std::int64_t key) override {
    check_user_key(key);
    std::uint64_t head = heads_[bucket(key)];
    std::lock_guard lk(locks_.get(mode_ == LockMode::coarse ? root_ : head));
    std::uint64_t pred = head;
    std::uint64_t cur = dom_.load_u64(head + 16);
    while (dom_.load_i64(cur) < key) {
      pred = cur;
      cur = dom_.load_u64(cur + 16);
    }
    if (dom_.load_i64(cur) != key) return false;
    auto t = be_.begin();
    txn_u64(*t, pred + 16, dom_.load_u64(cur + 16));
    pool_.free(PRef(cur), t->writer());
    t->commit();
    return true;
  }

  std::optional<std::uint64_t> find(std::int64_t key) override {
    check_user_key(key);
    std::uint64_t head = heads_[bucket(key)];
    std::lock_guard lk(locks_.get(mode_ == LockMode::coarse ? root_ : head));
    std::uint64_t cur = dom_.load_u64(head + 16);
    while (dom_.load_i64(cur) < key) cur = dom_.load_u64(cur + 16);
    if (dom_.load_i64(cur) != key) return std::nullopt;
    return dom_.load_u64(cur + 8);
  }

  std::vector<std::pair<std::int64_t, std::uint64_t>> snapshot() override {
    std::vector<std::pair<std::int64_t, std::uint64_t>> all;
    for (std::uint64_t b = 0; b < buckets_; ++b) {
      auto items = walk_chain(pool_, heads_[b]);
      all.insert(all.end(), items.begin(), items.end());
    }
    std::sort(all.begin(), all.end());
    return all;
  }

  void verify() override {
    pool_.validate_ref(PRef(root_));
    if (dom_.load_u64(root_) != kKindChained ||
        dom_.load_u64(root_ + 8) != buckets_)
      raise(Errc::corruption, "root is not this chained table");
    for (std::uint64_t b = 0; b < buckets_; ++b) {
      auto items = walk_chain(pool_, dom_.load_u64(root_ + 16 + 8 * b));
      for (auto& [k, v] : items)
        if (bucket(k) != b)
          raise(Errc::corruption, "key stored in the wrong bucket");
    }
  }

 private:
  std::uint64_t bucket(std::int64_t key) const {
    return static_cast<std::uint64_t>(key) & (buckets_ - 1);
  }

  TxnBackend& be_;
  Pool& pool_;
  PersistDomain& dom_;
  LockRegistry& locks_;
  LockMode mode_;
  std::uint64_t root_ = 0;
  std::uint64_t buckets_ = 0;
  std::vector<std::uint64_t> heads_;
};

// ---------------------------------------------------------------------------

// Open addressing, linear probing, tombstones. One lock; occupancy (live
// plus tombstones) is capped at three quarters of capacity.
class ProbeTable final : public IStructure {
 public:
  ProbeTable(TxnBackend& be, LockRegistry& locks)
      : be_(be), pool_(be.pool()), dom_(be.pool().domain()), locks_(locks) {}

  static constexpr std::uint64_t kSlotEmpty = 0;
  static constexpr std::uint64_t kSlotFull = 1;
  static constexpr std::uint64_t kSlotTomb = 2;

  void create(std::uint64_t capacity) {
    if (pool_.root()) raise(Errc::state, "pool already holds a structure");
    if (capacity == 0 || (capacity & (capacity - 1)) != 0)
      raise(Errc::config, "capacity must be a power of two");
    auto t = be_.begin();
    PRef root = pool_.alloc(32 + capacity * 24, t->writer());
    txn_u64(*t, root.off, kKindProbe);
    txn_u64(*t, root.off + 8, capacity);
    // live and tombstone counts start zero; alloc zeroed the payload, which
    // also leaves every slot empty.
    pool_.set_root(root, t->writer());
    t->commit();
    root_ = root.off;
    cap_ = capacity;
  }

  void attach() {
    PRef root = pool_.root();
    if (!root) raise(Errc::state, "pool holds no structure");
    pool_.validate_ref(root);
    if (dom_.load_u64(root.off) != kKindProbe)
      raise(Errc::corruption, "root is not an open-addressed table");
    root_ = root.off;
    cap_ = dom_.load_u64(root.off + 8);
    if (cap_ == 0 || (cap_ & (cap_ - 1)) != 0 ||
        pool_.payload_size(root) < 32 + cap_ * 24)
      raise(Errc::corruption, "open table geometry is invalid");
  }

  bool add(std::int64_t key, std::uint64_t value) override {
    check_user_key(key);
    std::lock_guard lk(locks_.get(root_));
    std::uint64_t live = dom_.load_u64(root_ + 16);
    std::uint64_t tombs = dom_.load_u64(root_ + 24);
    std::uint64_t idx = splitmix64(static_cast<std::uint64_t>(key)) & (cap_ - 1);
    std::optional<std::uint64_t> reuse;
    for (std::uint64_t n = 0; n < cap_; ++n, idx = (idx + 1) & (cap_ - 1)) {
      std::uint64_t state = dom_.load_u64(slot(idx));
      if (state == kSlotFull) {
        if (dom_.load_i64(slot(idx) + 8) == key) return false;
      } else if (state == kSlotTomb) {
        if (!reuse) reuse = idx;
      } else {
        break;  // empty: key is absent
      }
    }
    if (!reuse && live + tombs + 1 > cap_ * 3 / 4)
      raise(Errc::table_full, "occupancy cap reached");

    std::uint64_t target = reuse ? *reuse : idx;
    auto t = be_.begin();
    std::byte buf[24];
    bytes::store_u64(buf, kSlotFull);
    bytes::store_i64(buf + 8, key);
    bytes::store_u64(buf + 16, value);
    t->write(slot(target), buf);
    std::byte cnt[16];
    bytes::store_u64(cnt, live + 1);
    bytes::store_u64(cnt + 8, reuse ? tombs - 1 : tombs);
    t->write(root_ + 16, cnt);
    t->commit();
    return true;
  }

  bool remove(std::int64_t key) override {
    check_user_key(key);
    std::lock_guard lk(locks_.get(root_));
    std::uint64_t idx = splitmix64(static_cast<std::uint64_t>(key)) & (cap_ - 1);
    for (std::uint64_t n = 0; n < cap_; ++n, idx = (idx + 1) & (cap_ - 1)) {
      std::uint64_t state = dom_.load_u64(slot(idx));
      if (state == kSlotEmpty) return false;
      if (state == kSlotFull && dom_.load_i64(slot(idx) + 8) == key) {
        auto t = be_.begin();
        txn_u64(*t, slot(idx), kSlotTomb);
        std::byte cnt[16];
        bytes::store_u64(cnt, dom_.load_u64(root_ + 16) - 1);
        bytes::store_u64(cnt + 8, dom_.load_u64(root_ + 24) + 1);
        t->write(root_ + 16, cnt);
        t->commit();
        return true;
      }
    }
    return false;
  }

  std::optional<std::uint64_t> find(std::int64_t key) override {
    check_user_key(key);
    std::lock_guard lk(locks_.get(root_));
    std::uint64_t idx = splitmix64(static_cast<std::uint64_t>(key)) & (cap_ - 1);
    for (std::uint64_t n = 0; n < cap_; ++n, idx = (idx + 1) & (cap_ - 1)) {
      std::uint64_t state = dom_.load_u64(slot(idx));
      if (state == kSlotEmpty) return std::nullopt;
      if (state == kSlotFull && dom_.load_i64(slot(idx) + 8) == key)
        return dom_.load_u64(slot(idx) + 16);
    }
    return std::nullopt;
  }

  std::vector<std::pair<std::int64_t, std::uint64_t>> snapshot() override {
    std::vector<std::pair<std::int64_t, std::uint64_t>> all;
    for (std::uint64_t j = 0; j < cap_; ++j)
      if (dom_.load_u64(slot(j)) == kSlotFull)
        all.emplace_back(dom_.load_i64(slot(j) + 8),
                         dom_.load_u64(slot(j) + 16));
    std::sort(all.begin(), all.end());
    return all;
  }

  void verify() override {
    pool_.validate_ref(PRef(root_));
    if (dom_.load_u64(root_) != kKindProbe || dom_.load_u64(root_ + 8) != cap_)
      raise(Errc::corruption, "root is not this open table");
    std::uint64_t live = 0, tombs = 0;
    for (std::uint64_t j = 0; j < cap_; ++j) {
      std::uint64_t state = dom_.load_u64(slot(j));
      if (state == kSlotFull)
        live += 1;
      else if (state == kSlotTomb)
        tombs += 1;
      else if (state != kSlotEmpty)
        raise(Errc::corruption, "slot with unknown state");
    }
    if (live != dom_.load_u64(root_ + 16) || tombs != dom_.load_u64(root_ + 24))
      raise(Errc::corruption, "occupancy counters do not match the slots");
    if (live + tombs > cap_ * 3 / 4)
      raise(Errc::corruption, "occupancy exceeds the load cap");
    for (std::uint64_t j = 0; j < cap_; ++j) {
      if (dom_.load_u64(slot(j)) != kSlotFull) continue;
      std::int64_t k = dom_.load_i64(slot(j) + 8);
      // The probe path from the key's hash to its slot must be gap-free,
      // or lookups would miss it.
      std::uint64_t idx = splitmix64(static_cast<std::uint64_t>(k)) & (cap_ - 1);
      bool seen = false;
      for (std::uint64_t n = 0; n < cap_; ++n, idx = (idx + 1) & (cap_ - 1)) {
        std::uint64_t state = dom_.load_u64(slot(idx));
        if (idx == j) {
          seen = true;
          break;
        }
        if (state == kSlotEmpty) break;
      }
      if (!seen) raise(Errc::corruption, "key is not reachable by probing");
      auto dup = find_duplicate(k, j);
      if (dup) raise(Errc::corruption, "key stored twice");
    }
  }

 private:
  std::uint64_t slot(std::uint64_t j) const { return root_ + 32 + j * 24; }

  std::optional<std::uint64_t> find_duplicate(std::int64_t key,
                                              std::uint64_t except) {
    for (std::uint64_t j = 0; j < cap_; ++j)
      if (j != except && dom_.load_u64(slot(j)) == kSlotFull &&
          dom_.load_i64(slot(j) + 8) == key)
        return j;
    return std::nullopt;
  }

  TxnBackend& be_;
  Pool& pool_;
  PersistDomain& dom_;
  LockRegistry& locks_;
  std::uint64_t root_ = 0;
  std::uint64_t cap_ = 0;
};

}  // namespace

// ---------------------------------------------------------------------------

namespace {

class RedoAny final : public AnyTxn {
 public:
  explicit RedoAny(RedoTxn txn) : txn_(std::move(txn)) {}
  void write(std::uint64_t off, std::span<const std::byte> data) override {
    txn_.write(off, data);
  }
  void commit() override { txn_.commit(); }
  DurableWriter& writer() override { return txn_.writer(); }

 private:
  RedoTxn txn_;
};

class UndoAny final : public AnyTxn {
 public:
  explicit UndoAny(UndoTxn txn) : txn_(std::move(txn)) {}
  void write(std::uint64_t off, std::span<const std::byte> data) override {
    txn_.write(off, data);
  }
  void commit() override { txn_.commit(); }
  DurableWriter& writer() override { return txn_.writer(); }

 private:
  UndoTxn txn_;
};

}  // namespace

std::unique_ptr<AnyTxn> RedoBackend::begin() {
  return std::make_unique<RedoAny>(eng_.begin());
}

std::unique_ptr<AnyTxn> UndoBackend::begin() {
  return std::make_unique<UndoAny>(eng_.begin());
}

std::unique_ptr<IStructure> create_structure(TxnBackend& be, LockRegistry& locks,
                                             StructKind kind, LockMode mode,
                                             const StructConfig& cfg) {
  switch (kind) {
    case StructKind::set: {
      auto s = std::make_unique<SortedSet>(be, locks, mode);
      s->create();
      return s;
    }
    case StructKind::ht_closed: {
      auto s = std::make_unique<ChainedTable>(be, locks, mode);
      s->create(cfg.bucket_count);
      return s;
    }
    case StructKind::ht_open: {
      if (mode == LockMode::fine)
        raise(Errc::config, "the open-addressed table uses a single lock");
      auto s = std::make_unique<ProbeTable>(be, locks);
      s->create(cfg.capacity);
      return s;
    }
  }
  raise(Errc::config, "unknown structure kind");
}

std::unique_ptr<IStructure> attach_structure(TxnBackend& be, LockRegistry& locks,
                                             StructKind kind, LockMode mode) {
  switch (kind) {
    case StructKind::set: {
      auto s = std::make_unique<SortedSet>(be, locks, mode);
      s->attach();
      return s;
    }
    case StructKind::ht_closed: {
      auto s = std::make_unique<ChainedTable>(be, locks, mode);
      s->attach();
      return s;
    }
    case StructKind::ht_open: {
      if (mode == LockMode::fine)
        raise(Errc::config, "the open-addressed table uses a single lock");
      auto s = std::make_unique<ProbeTable>(be, locks);
      s->attach();
      return s;
    }
  }
  raise(Errc::config, "unknown structure kind");
}

}  // namespace pmkit
