#include <algorithm>
#include <cstring>
#include <string>
#include <unordered_map>

#include "pmkit/bytes.hpp"
#include "pmkit/errors.hpp"
#include "pmkit/structure.hpp"

// Structures over the named-allocation backend. Links between nodes are
// stored as names, not offsets; each session rebuilds an offset index by
// resolving every node name once at attach. Mutations are staged in the
// session and become durable at the next checkpoint.

namespace pmkit {

namespace {

constexpr std::uint64_t kKindNamedSet = 4;
constexpr std::uint64_t kKindNamedChained = 5;
constexpr std::uint64_t kKindNamedProbe = 6;

constexpr std::uint64_t kNameField = 32;
constexpr std::uint64_t kNodeBytes = 80;  // key, value, own_name, next_name

void check_user_key(std::int64_t key) {
  if (key == INT64_MIN || key == INT64_MAX)
    raise(Errc::range, "key collides with a sentinel");
}

std::string read_name(const PersistDomain& d, std::uint64_t off) {
  char buf[kNameField];
  d.read(off, {reinterpret_cast<std::byte*>(buf), kNameField});
  std::size_t n = 0;
  while (n < kNameField && buf[n] != '\0') ++n;
  return std::string(buf, n);
}

void write_name(NamedSession& ns, std::uint64_t off, std::string_view name) {
  std::byte buf[kNameField] = {};
  std::memcpy(buf, name.data(), name.size());
  ns.write_at(off, buf);
}

void write_u64(NamedSession& ns, std::uint64_t off, std::uint64_t v) {
  std::byte buf[8];
  bytes::store_u64(buf, v);
  ns.write_at(off, buf);
}

// Shared by the set and the chained table: one sorted chain whose first
// element is named by a 32-byte field at `link_off`.
class NamedChain {
 public:
  NamedChain(NamedSession& ns, Pool& pool)
      : ns_(ns), pool_(pool), dom_(pool.domain()) {}

  // Follows the name chain, resolving each node once, and records the
  // session-only successor handles.
  void rebuild(std::uint64_t link_off) {
    std::uint64_t max_iter = pool_.log_region() / kNodeBytes + 2;
    std::string name = read_name(dom_, link_off);
    std::uint64_t pred = 0;
    std::uint64_t steps = 0;
    std::int64_t prev_key = INT64_MIN;
    first_[link_off] = 0;
    while (!name.empty()) {
      if (++steps > max_iter)
        raise(Errc::corruption, "name chain does not terminate");
      NamedEntry e = ns_.resolve(name);
      if (e.size < kNodeBytes)
        raise(Errc::corruption, "named node is too small");
      pool_.validate_ref(e.ref);
      std::uint64_t ref = e.ref.off;
      if (read_name(dom_, ref + 16) != name)
        raise(Errc::corruption, "node does not carry its own name");
      std::int64_t k = dom_.load_i64(ref);
      if (k <= prev_key)
        raise(Errc::corruption, "name chain keys out of order");
      prev_key = k;
      if (pred == 0)
        first_[link_off] = ref;
      else
        next_[pred] = ref;
      next_[ref] = 0;
      pred = ref;
      name = read_name(dom_, ref + 48);
    }
  }

  std::uint64_t first(std::uint64_t link_off) const {
    auto it = first_.find(link_off);
    return it == first_.end() ? 0 : it->second;
  }
  std::uint64_t next(std::uint64_t ref) const { return next_.at(ref); }

  // pred == 0 means "insert at the front of link_off's chain".
  void insert(std::uint64_t link_off, std::uint64_t pred, std::uint64_t ref,
              std::string_view name, std::int64_t key, std::uint64_t value) {
    std::uint64_t succ = pred ? next_.at(pred) : first(link_off);
    std::byte fixed[16];
    bytes::store_i64(fixed, key);
    bytes::store_u64(fixed + 8, value);
    ns_.write_at(ref, fixed);
    write_name(ns_, ref + 16, name);
    write_name(ns_, ref + 48, succ ? read_name(dom_, succ + 16) : "");
    if (pred)
      write_name(ns_, pred + 48, name);
    else
      write_name(ns_, link_off, name);
    ns_.publish(name, PRef(ref), kNodeBytes);
    next_[ref] = succ;
    if (pred)
      next_[pred] = ref;
    else
      first_[link_off] = ref;
  }

  void unlink(std::uint64_t link_off, std::uint64_t pred, std::uint64_t ref) {
    std::uint64_t succ = next_.at(ref);
    std::string succ_name = succ ? read_name(dom_, succ + 16) : "";
    if (pred)
      write_name(ns_, pred + 48, succ_name);
    else
      write_name(ns_, link_off, succ_name);
    ns_.retract(read_name(dom_, ref + 16));
    pool_.free(PRef(ref), ns_);
    next_.erase(ref);
    if (pred)
      next_[pred] = succ;
    else
      first_[link_off] = succ;
  }

  std::vector<std::pair<std::int64_t, std::uint64_t>> collect(
      std::uint64_t link_off) const {
    std::vector<std::pair<std::int64_t, std::uint64_t>> items;
    for (std::uint64_t cur = first(link_off); cur; cur = next_.at(cur))
      items.emplace_back(dom_.load_i64(cur), dom_.load_u64(cur + 8));
    return items;
  }

 private:
  NamedSession& ns_;
  Pool& pool_;
  const PersistDomain& dom_;
  std::unordered_map<std::uint64_t, std::uint64_t> first_;
  std::unordered_map<std::uint64_t, std::uint64_t> next_;
};

// ---------------------------------------------------------------------------

// Root record: kind, next node id, first_name. Nodes are published as
// "node-<id>".
class NamedSet final : public IStructure {
 public:
  NamedSet(NamedSession& ns, Pool& pool, LockRegistry& locks, LockMode mode)
      : ns_(ns), pool_(pool), dom_(pool.domain()), locks_(locks), mode_(mode),
        chain_(ns, pool) {}

  void create() {
    if (pool_.root()) raise(Errc::state, "pool already holds a structure");
    PRef root = pool_.alloc(48, ns_);
    write_u64(ns_, root.off, kKindNamedSet);
    write_u64(ns_, root.off + 8, 1);
    ns_.publish("set", root, 48);
    pool_.set_root(root, ns_);
    ns_.checkpoint();
    root_ = root.off;
    chain_.rebuild(root_ + 16);
  }

  void attach() {
    PRef root = pool_.root();
    if (!root) raise(Errc::state, "pool holds no structure");
    pool_.validate_ref(root);
    if (dom_.load_u64(root.off) != kKindNamedSet)
      raise(Errc::corruption, "root is not a named set");
    root_ = root.off;
    chain_.rebuild(root_ + 16);
  }

  bool add(std::int64_t key, std::uint64_t value) override {
    check_user_key(key);
    if (mode_ == LockMode::coarse) {
      std::lock_guard lk(locks_.get(root_));
      auto [pred, cur] = seek(key);
      return do_add(pred, cur, key, value);
    }
    auto [pl, cl, pred, cur] = seek_coupled(key);
    return do_add(pred, cur, key, value);
  }

  bool remove(std::int64_t key) override {
    check_user_key(key);
    if (mode_ == LockMode::coarse) {
      std::lock_guard lk(locks_.get(root_));
      auto [pred, cur] = seek(key);
      if (!cur || dom_.load_i64(cur) != key) return false;
      chain_.unlink(root_ + 16, pred, cur);
      return true;
    }
    auto [pl, cl, pred, cur] = seek_coupled(key);
    if (!cur || dom_.load_i64(cur) != key) return false;
    chain_.unlink(root_ + 16, pred, cur);
    return true;
  }

  std::optional<std::uint64_t> find(std::int64_t key) override {
    check_user_key(key);
    if (mode_ == LockMode::coarse) {
      std::lock_guard lk(locks_.get(root_));
      auto [pred, cur] = seek(key);
      (void)pred;
      if (!cur || dom_.load_i64(cur) != key) return std::nullopt;
      return dom_.load_u64(cur + 8);
    }
    auto [pl, cl, pred, cur] = seek_coupled(key);
    (void)pred;
    if (!cur || dom_.load_i64(cur) != key) return std::nullopt;
    return dom_.load_u64(cur + 8);
  }

  std::vector<std::pair<std::int64_t, std::uint64_t>> snapshot() override {
    return chain_.collect(root_ + 16);
  }

  void verify() override {
    pool_.validate_ref(PRef(root_));
    if (dom_.load_u64(root_) != kKindNamedSet)
      raise(Errc::corruption, "root is not a named set");
    // Rebuild from names and require agreement with the session index.
    NamedChain probe(ns_, pool_);
    probe.rebuild(root_ + 16);
    if (probe.collect(root_ + 16) != chain_.collect(root_ + 16))
      raise(Errc::corruption, "session index disagrees with the name chain");
  }

 private:
  // Walk to the first node with key >= target; cur == 0 at chain end.
  std::pair<std::uint64_t, std::uint64_t> seek(std::int64_t key) {
    std::uint64_t pred = 0;
    std::uint64_t cur = chain_.first(root_ + 16);
    while (cur && dom_.load_i64(cur) < key) {
      pred = cur;
      cur = chain_.next(cur);
    }
    return {pred, cur};
  }

  struct Coupled {
    std::unique_lock<std::mutex> pl, cl;
    std::uint64_t pred, cur;
  };

  // Position 0 (no predecessor node) is guarded by the root lock. A held
  // chain-end lock is modeled by an empty unique_lock with cur == 0.
  Coupled seek_coupled(std::int64_t key) {
    std::unique_lock pl(locks_.get(root_));
    std::uint64_t pred = 0;
    std::uint64_t cur = chain_.first(root_ + 16);
    std::unique_lock<std::mutex> cl;
    if (cur) cl = std::unique_lock(locks_.get(cur));
    while (cur && dom_.load_i64(cur) < key) {
      std::uint64_t nxt = chain_.next(cur);
      std::unique_lock<std::mutex> nl;
      if (nxt) nl = std::unique_lock(locks_.get(nxt));
      pl = std::move(cl);
      cl = std::move(nl);
      pred = cur;
      cur = nxt;
    }
    return {std::move(pl), std::move(cl), pred, cur};
  }

  bool do_add(std::uint64_t pred, std::uint64_t cur, std::int64_t key,
              std::uint64_t value) {
    if (cur && dom_.load_i64(cur) == key) return false;
    std::uint64_t id = dom_.load_u64(root_ + 8);
    write_u64(ns_, root_ + 8, id + 1);
    PRef node = pool_.alloc(kNodeBytes, ns_);
    chain_.insert(root_ + 16, pred, node.off, "node-" + std::to_string(id),
                  key, value);
    return true;
  }

  NamedSession& ns_;
  Pool& pool_;
  const PersistDomain& dom_;
  LockRegistry& locks_;
  LockMode mode_;
  NamedChain chain_;
  std::uint64_t root_ = 0;
};

// ---------------------------------------------------------------------------

// Root record: kind, next node id, bucket count, then one 32-byte first_name
// per bucket.
class NamedChainedTable final : public IStructure {
 public:
  NamedChainedTable(NamedSession& ns, Pool& pool, LockRegistry& locks,
                    LockMode mode)
      : ns_(ns), pool_(pool), dom_(pool.domain()), locks_(locks), mode_(mode),
        chain_(ns, pool) {}

  void create(std::uint64_t buckets) {
    if (pool_.root()) raise(Errc::state, "pool already holds a structure");
    if (buckets == 0 || (buckets & (buckets - 1)) != 0)
      raise(Errc::config, "bucket count must be a power of two");
    PRef root = pool_.alloc(24 + kNameField * buckets, ns_);
    write_u64(ns_, root.off, kKindNamedChained);
    write_u64(ns_, root.off + 8, 1);
    write_u64(ns_, root.off + 16, buckets);
    ns_.publish("ht", root, 24 + kNameField * buckets);
    pool_.set_root(root, ns_);
    ns_.checkpoint();
    root_ = root.off;
    buckets_ = buckets;
    for (std::uint64_t b = 0; b < buckets_; ++b) chain_.rebuild(link_off(b));
  }

  void attach() {
    PRef root = pool_.root();
    if (!root) raise(Errc::state, "pool holds no structure");
    pool_.validate_ref(root);
    if (dom_.load_u64(root.off) != kKindNamedChained)
      raise(Errc::corruption, "root is not a named chained table");
    root_ = root.off;
    buckets_ = dom_.load_u64(root.off + 16);
    if (buckets_ == 0 || (buckets_ & (buckets_ - 1)) != 0 ||
        pool_.payload_size(root) < 24 + kNameField * buckets_)
      raise(Errc::corruption, "chained table geometry is invalid");
    for (std::uint64_t b = 0; b < buckets_; ++b) chain_.rebuild(link_off(b));
  }

  bool add(std::int64_t key, std::uint64_t value) override {
    check_user_key(key);
    std::uint64_t lo = link_off(bucket(key));
    std::lock_guard lk(locks_.get(mode_ == LockMode::coarse ? root_ : lo));
    auto [pred, cur] = seek(lo, key);
    if (cur && dom_.load_i64(cur) == key) return false;
    std::uint64_t id = dom_.load_u64(root_ + 8);
    write_u64(ns_, root_ + 8, id + 1);
    PRef node = pool_.alloc(kNodeBytes, ns_);
    chain_.insert(lo, pred, node.off, "node-" + std::to_string(id), key, value);
    return true;
  }

  bool remove(std::int64_t key) override {
    check_user_key(key);
    std::uint64_t lo = link_off(bucket(key));
    std::lock_guard lk(locks_.get(mode_ == LockMode::coarse ? root_ : lo));
    auto [pred, cur] = seek(lo, key);
    if (!cur || dom_.load_i64(cur) != key) return false;
    chain_.unlink(lo, pred, cur);
    return true;
  }

  std::optional<std::uint64_t> find(std::int64_t key) override {
    check_user_key(key);
    std::uint64_t lo = link_off(bucket(key));
    std::lock_guard lk(locks_.get(mode_ == LockMode::coarse ? root_ : lo));
    auto [pred, cur] = seek(lo, key);
    (void)pred;
    if (!cur || dom_.load_i64(cur) != key) return std::nullopt;
    return dom_.load_u64(cur + 8);
  }

  std::vector<std::pair<std::int64_t, std::uint64_t>> snapshot() override {
    std::vector<std::pair<std::int64_t, std::uint64_t>> all;
    for (std::uint64_t b = 0; b < buckets_; ++b) {
      auto items = chain_.collect(link_off(b));
      all.insert(all.end(), items.begin(), items.end());
    }
    std::sort(all.begin(), all.end());
    return all;
  }

  void verify() override {
    pool_.validate_ref(PRef(root_));
    if (dom_.load_u64(root_) != kKindNamedChained ||
        dom_.load_u64(root_ + 16) != buckets_)
      raise(Errc::corruption, "root is not this chained table");
    NamedChain probe(ns_, pool_);
    for (std::uint64_t b = 0; b < buckets_; ++b) {
      probe.rebuild(link_off(b));
      if (probe.collect(link_off(b)) != chain_.collect(link_off(b)))
        raise(Errc::corruption, "session index disagrees with the name chain");
      for (auto& [k, v] : probe.collect(link_off(b)))
        if (bucket(k) != b)
          raise(Errc::corruption, "key stored in the wrong bucket");
    }
  }

 private:
  std::uint64_t bucket(std::int64_t key) const {
    return static_cast<std::uint64_t>(key) & (buckets_ - 1);
  }
  std::uint64_t link_off(std::uint64_t b) const {
    return root_ + 24 + kNameField * b;
  }

  std::pair<std::uint64_t, std::uint64_t> seek(std::uint64_t lo,
                                               std::int64_t key) {
    std::uint64_t pred = 0;
    std::uint64_t cur = chain_.first(lo);
    while (cur && dom_.load_i64(cur) < key) {
      pred = cur;
      cur = chain_.next(cur);
    }
    return {pred, cur};
  }

  NamedSession& ns_;
  Pool& pool_;
  const PersistDomain& dom_;
  LockRegistry& locks_;
  LockMode mode_;
  NamedChain chain_;
  std::uint64_t root_ = 0;
  std::uint64_t buckets_ = 0;
};

// ---------------------------------------------------------------------------

// The whole table is one named allocation ("ht"): kind, capacity, live,
// tombstones, then 24-byte slots. Linear probing with tombstone reuse.
class NamedProbeTable final : public IStructure {
 public:
  NamedProbeTable(NamedSession& ns, Pool& pool, LockRegistry& locks)
      : ns_(ns), pool_(pool), dom_(pool.domain()), locks_(locks) {}

  static constexpr std::uint64_t kSlotEmpty = 0;
  static constexpr std::uint64_t kSlotFull = 1;
  static constexpr std::uint64_t kSlotTomb = 2;

  void create(std::uint64_t capacity) {
    if (pool_.root()) raise(Errc::state, "pool already holds a structure");
    if (capacity == 0 || (capacity & (capacity - 1)) != 0)
      raise(Errc::config, "capacity must be a power of two");
    PRef root = pool_.alloc(32 + capacity * 24, ns_);
    write_u64(ns_, root.off, kKindNamedProbe);
    write_u64(ns_, root.off + 8, capacity);
    ns_.publish("ht", root, 32 + capacity * 24);
    pool_.set_root(root, ns_);
    ns_.checkpoint();
    root_ = root.off;
    cap_ = capacity;
  }

  void attach() {
    PRef root = pool_.root();
    if (!root) raise(Errc::state, "pool holds no structure");
    pool_.validate_ref(root);
    if (dom_.load_u64(root.off) != kKindNamedProbe)
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
    std::uint64_t idx = hash(key);
    std::optional<std::uint64_t> reuse;
    for (std::uint64_t n = 0; n < cap_; ++n, idx = (idx + 1) & (cap_ - 1)) {
      std::uint64_t state = dom_.load_u64(slot(idx));
      if (state == kSlotFull) {
        if (dom_.load_i64(slot(idx) + 8) == key) return false;
      } else if (state == kSlotTomb) {
        if (!reuse) reuse = idx;
      } else {
        break;
      }
    }
    if (!reuse && live + tombs + 1 > cap_ * 3 / 4)
      raise(Errc::table_full, "occupancy cap reached");
    std::uint64_t target = reuse ? *reuse : idx;
    std::byte buf[24];
    bytes::store_u64(buf, kSlotFull);
    bytes::store_i64(buf + 8, key);
    bytes::store_u64(buf + 16, value);
    ns_.write_at(slot(target), buf);
    std::byte cnt[16];
    bytes::store_u64(cnt, live + 1);
    bytes::store_u64(cnt + 8, reuse ? tombs - 1 : tombs);
    ns_.write_at(root_ + 16, cnt);
    return true;
  }

  bool remove(std::int64_t key) override {
    check_user_key(key);
    std::lock_guard lk(locks_.get(root_));
    std::uint64_t idx = hash(key);
    for (std::uint64_t n = 0; n < cap_; ++n, idx = (idx + 1) & (cap_ - 1)) {
      std::uint64_t state = dom_.load_u64(slot(idx));
      if (state == kSlotEmpty) return false;
      if (state == kSlotFull && dom_.load_i64(slot(idx) + 8) == key) {
        write_u64(ns_, slot(idx), kSlotTomb);
        std::byte cnt[16];
        bytes::store_u64(cnt, dom_.load_u64(root_ + 16) - 1);
        bytes::store_u64(cnt + 8, dom_.load_u64(root_ + 24) + 1);
        ns_.write_at(root_ + 16, cnt);
        return true;
      }
    }
    return false;
  }

  std::optional<std::uint64_t> find(std::int64_t key) override {
    check_user_key(key);
    std::lock_guard lk(locks_.get(root_));
    std::uint64_t idx = hash(key);
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
    if (dom_.load_u64(root_) != kKindNamedProbe ||
        dom_.load_u64(root_ + 8) != cap_)
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
    for (std::uint64_t j = 0; j < cap_; ++j) {
      if (dom_.load_u64(slot(j)) != kSlotFull) continue;
      std::int64_t k = dom_.load_i64(slot(j) + 8);
      std::uint64_t idx = hash(k);
      bool seen = false;
      for (std::uint64_t n = 0; n < cap_; ++n, idx = (idx + 1) & (cap_ - 1)) {
        if (idx == j) {
          seen = true;
          break;
        }
        if (dom_.load_u64(slot(idx)) == kSlotEmpty) break;
      }
      if (!seen) raise(Errc::corruption, "key is not reachable by probing");
    }
  }

 private:
  std::uint64_t slot(std::uint64_t j) const { return root_ + 32 + j * 24; }

  std::uint64_t hash(std::int64_t key) const {
    std::uint64_t x = static_cast<std::uint64_t>(key) + 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return (x ^ (x >> 31)) & (cap_ - 1);
  }

  NamedSession& ns_;
  Pool& pool_;
  const PersistDomain& dom_;
  LockRegistry& locks_;
  std::uint64_t root_ = 0;
  std::uint64_t cap_ = 0;
};

}  // namespace

// ---------------------------------------------------------------------------

std::unique_ptr<IStructure> create_structure(NamedSession& ns,
                                             LockRegistry& locks,
                                             StructKind kind, LockMode mode,
                                             const StructConfig& cfg) {
  Pool& pool = ns.pool();
  switch (kind) {
    case StructKind::set: {
      auto s = std::make_unique<NamedSet>(ns, pool, locks, mode);
      s->create();
      return s;
    }
    case StructKind::ht_closed: {
      auto s = std::make_unique<NamedChainedTable>(ns, pool, locks, mode);
      s->create(cfg.bucket_count);
      return s;
    }
    case StructKind::ht_open: {
      if (mode == LockMode::fine)
        raise(Errc::config, "the open-addressed table uses a single lock");
      auto s = std::make_unique<NamedProbeTable>(ns, pool, locks);
      s->create(cfg.capacity);
      return s;
    }
  }
  raise(Errc::config, "unknown structure kind");
}

std::unique_ptr<IStructure> attach_structure(NamedSession& ns,
                                             LockRegistry& locks,
                                             StructKind kind, LockMode mode) {
  Pool& pool = ns.pool();
  switch (kind) {
    case StructKind::set: {
      auto s = std::make_unique<NamedSet>(ns, pool, locks, mode);
      s->attach();
      return s;
    }
    case StructKind::ht_closed: {
      auto s = std::make_unique<NamedChainedTable>(ns, pool, locks, mode);
      s->attach();
      return s;
    }
    case StructKind::ht_open: {
      if (mode == LockMode::fine)
        raise(Errc::config, "the open-addressed table uses a single lock");
      auto s = std::make_unique<NamedProbeTable>(ns, pool, locks);
      s->attach();
      return s;
    }
  }
  raise(Errc::config, "unknown structure kind");
}

}  // namespace pmkit
