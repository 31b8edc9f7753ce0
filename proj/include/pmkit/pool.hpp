#pragma once

#include <cstdint>
#include <memory>
#include <mutex>

#include "pmkit/persist_domain.hpp"
#include "pmkit/pref.hpp"
#include "pmkit/writer.hpp"

namespace pmkit {

enum class Backend : std::uint32_t { redo = 0, undo = 1, named = 2 };

struct PoolConfig {
  Backend backend = Backend::redo;
  std::uint64_t pool_size = 64ull << 20;
  // redo/undo log geometry
  std::uint64_t slot_bytes = 256ull << 10;
  std::uint64_t slot_count = 64;
  // undo snapshot granularity: 64, 256 or 4096
  std::uint64_t snapshot_unit = 4096;
  // named backend geometry
  std::uint64_t catalog_capacity = 64;
  std::uint64_t named_region_bytes = 4ull << 20;
};

// Pool file mechanics: the fixed header, the object space with its
// first-fit free list, and the bounds of the backend's log region. All
// durable mutation goes through a DurableWriter so the transaction layers
// above decide how it reaches durability.
class Pool {
 public:
  static std::unique_ptr<Pool> create(std::unique_ptr<PersistDomain> dom,
                                      const PoolConfig& cfg);
  // Validates the header and loads geometry. Does not touch the logs;
  // backend recovery runs when an engine attaches.
  static std::unique_ptr<Pool> open(std::unique_ptr<PersistDomain> dom);

  PersistDomain& domain() { return *dom_; }
  const PersistDomain& domain() const { return *dom_; }

  Backend backend() const { return backend_; }
  std::uint64_t size() const { return size_; }
  std::uint64_t log_region() const { return log_region_; }
  std::uint64_t slot_bytes() const { return slot_bytes_; }
  std::uint64_t slot_count() const { return slot_count_; }
  std::uint64_t snapshot_unit() const { return snapshot_unit_; }
  std::uint64_t catalog_capacity() const { return catalog_capacity_; }

  PRef root() const;
  void set_root(PRef ref, DurableWriter& w);

  // Object space. alloc returns a zeroed payload of at least `size` bytes.
  PRef alloc(std::uint64_t size, DurableWriter& w);
  void free(PRef ref, DurableWriter& w);
  std::uint64_t payload_size(PRef ref) const;
  void validate_ref(PRef ref) const;

  std::mutex& alloc_mutex() { return alloc_mu_; }

  struct AuditReport {
    std::uint64_t live_blocks = 0;
    std::uint64_t free_blocks = 0;
    std::uint64_t live_bytes = 0;  // payload bytes
    std::uint64_t free_bytes = 0;
  };
  // Walks the object space block by block and cross-checks the free list.
  // Raises on any block that does not tile or any list inconsistency.
  AuditReport audit() const;

  bool clean_shutdown() const;
  void set_clean_shutdown(bool clean);  // direct store + flush + fence
  std::uint64_t session() const { return session_; }
  void bump_session();  // direct store + flush + fence, call after recovery

 private:
  Pool() = default;

  std::uint64_t free_head() const;

  std::unique_ptr<PersistDomain> dom_;
  Backend backend_ = Backend::redo;
  std::uint64_t size_ = 0;
  std::uint64_t log_region_ = 0;
  std::uint64_t slot_bytes_ = 0;
  std::uint64_t slot_count_ = 0;
  std::uint64_t snapshot_unit_ = 0;
  std::uint64_t catalog_capacity_ = 0;
  std::uint64_t session_ = 0;
  std::mutex alloc_mu_;
};

}  // namespace pmkit
