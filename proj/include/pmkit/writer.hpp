#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace pmkit {

class Pool;

// Sink for durable pool mutations. Each backend supplies one: the redo
// writer stages bytes in its log, the undo writer snapshots first and then
// stores in place, the named writer stores in place and marks dirty pages.
// Allocator and root updates go through this interface so every backend
// keeps them crash-consistent its own way.
class DurableWriter {
 public:
  virtual void write_at(std::uint64_t off, std::span<const std::byte> data) = 0;

  // Writers whose effects can still be rolled back after this call returns
  // (transactional backends) must take the pool's allocator lock here and
  // hold it until commit or abort finishes, and return true. Writers that
  // apply immediately return false and the allocator locks per call.
  virtual bool acquire_allocator(Pool&) { return false; }

 protected:
  ~DurableWriter() = default;
};

}  // namespace pmkit
