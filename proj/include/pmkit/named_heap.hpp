#pragma once

#include <cstdint>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pmkit/pool.hpp"
#include "pmkit/redo_log.hpp"  // RecoveryStats
#include "pmkit/writer.hpp"

namespace pmkit {

struct NamedEntry {
  PRef ref;
  std::uint64_t size = 0;
};

struct NamedStats {
  std::uint64_t resolutions = 0;
  std::uint64_t checkpoints = 0;
  std::uint64_t bytes_logged = 0;  // 4096 per page written into an epoch
};

// Named-allocation backend. Stores land in place but are not flushed;
// checkpoint() writes every dirty 4 KiB page into a checkpoint epoch, makes
// the epoch durable with a marker, then flushes the pages home. A crash
// between checkpoints rolls everything back to the last epoch. Allocations
// carry catalog names so a recovered structure is rebuilt by resolving
// names instead of trusting stored addresses. Catalog slots live in the log
// region and their pages ride in epochs just like object pages.
class NamedSession final : public DurableWriter {
 public:
  explicit NamedSession(Pool& pool);  // replays or discards a pending epoch
  NamedSession(const NamedSession&) = delete;
  NamedSession& operator=(const NamedSession&) = delete;

  Pool& pool() { return pool_; }

  // DurableWriter: store into the object space and remember the dirty pages.
  void write_at(std::uint64_t off, std::span<const std::byte> data) override;

  // Catalog updates take effect in memory at once and become durable with
  // the next checkpoint, together with the data they describe.
  void publish(std::string_view name, PRef ref, std::uint64_t size);
  void retract(std::string_view name);
  NamedEntry resolve(std::string_view name);  // raises not_found
  bool has(std::string_view name);

  void checkpoint();
  void close();

  NamedStats stats() const;
  RecoveryStats recovery() const { return recovery_; }
  std::uint64_t dirty_pages() const;

 private:
  void ensure_active();
  void recover();
  void discard_epoch();
  void store_dirty(std::uint64_t off, std::span<const std::byte> data);
  std::uint64_t entry_off(std::uint64_t slot) const;
  bool replay_target_ok(std::uint64_t page) const;

  Pool& pool_;
  PersistDomain& dom_;
  std::uint64_t region_;    // log region start; holds the epoch counter
  std::uint64_t catalog_;   // first catalog slot (region_ + 4096)
  std::uint64_t area_;      // epoch area start, page aligned
  std::uint64_t area_end_;  // pool end
  RecoveryStats recovery_;

  mutable std::mutex mu_;
  std::unordered_map<std::string, std::uint64_t> bound_;  // name -> slot
  std::vector<std::uint64_t> free_slots_;
  std::uint64_t next_epoch_ = 1;
  std::set<std::uint64_t> dirty_;  // page indexes
  bool activated_ = false;
  NamedStats stats_;
};

}  // namespace pmkit
