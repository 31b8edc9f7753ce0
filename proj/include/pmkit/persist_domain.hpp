#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pmkit/bytes.hpp"

namespace pmkit {

inline constexpr std::uint64_t kFlushLine = 64;

struct DomainCounters {
  std::uint64_t flush_calls = 0;
  std::uint64_t fence_calls = 0;
  std::uint64_t bytes_flushed = 0;
};

// One pool's persistence domain: a byte range with explicit flush/fence
// ordering. Two modes:
//
//   simulate  volatile and durable images held in memory. flush marks
//             64-byte lines pending, fence makes pending lines durable.
//             With tracing on, every store/flush/fence is recorded so a
//             crash image at any event index can be rebuilt later.
//   direct    file-backed mapping, msync on fence. No crash rebuild.
//
// Events are flushes and fences, numbered from 1 in issue order. Stores are
// not events. materialize_crash(k, seed) replays the trace through event k,
// then lets an adversary keep a seed-determined subset of the lines that
// were flushed but not yet fenced at that point. Same (k, seed) on the same
// trace gives a byte-identical image.
class PersistDomain {
 public:
  static std::unique_ptr<PersistDomain> create_sim(std::uint64_t size);
  static std::unique_ptr<PersistDomain> open_sim(std::vector<std::byte> image);
  static std::unique_ptr<PersistDomain> create_direct(const std::string& path,
                                                      std::uint64_t size);
  static std::unique_ptr<PersistDomain> open_direct(const std::string& path);

  ~PersistDomain();
  PersistDomain(const PersistDomain&) = delete;
  PersistDomain& operator=(const PersistDomain&) = delete;

  bool simulated() const { return simulate_; }
  std::uint64_t size() const { return size_; }

  void store(std::uint64_t off, std::span<const std::byte> data);
  void read(std::uint64_t off, std::span<std::byte> out) const;

  // Volatile view. Callers may read through it but must mutate via store().
  const std::byte* data() const { return base_; }

  std::uint64_t load_u64(std::uint64_t off) const;
  std::uint32_t load_u32(std::uint64_t off) const;
  std::int64_t load_i64(std::uint64_t off) const;
  void store_u64(std::uint64_t off, std::uint64_t v);
  void store_u32(std::uint64_t off, std::uint32_t v);
  void store_i64(std::uint64_t off, std::int64_t v);

  // Both return the event index they were assigned. A zero-length flush is
  // still an event and still counts as a call; it marks no lines.
  std::uint64_t flush(std::uint64_t off, std::uint64_t len);
  std::uint64_t fence();

  std::uint64_t event_count() const;
  DomainCounters counters() const;

  // Simulate mode only.
  void set_tracing(bool on);
  bool tracing() const { return tracing_; }
  std::vector<std::byte> durable_snapshot() const;
  // Without a seed nothing unfenced survives; with one, the adversary keeps
  // a seed-determined subset of the flushed-but-unfenced lines.
  std::vector<std::byte> materialize_crash(std::uint64_t event_index) const;
  std::vector<std::byte> materialize_crash(std::uint64_t event_index,
                                           std::uint64_t adversary_seed) const;

 private:
  PersistDomain() = default;

  struct TraceOp {
    enum Kind : std::uint8_t { kStore, kFlush, kFence };
    Kind kind;
    std::uint64_t off = 0;
    std::uint64_t len = 0;
    std::vector<std::byte> bytes;  // kStore only
  };

  void check_range(std::uint64_t off, std::uint64_t len) const;
  void mark_lines(std::uint64_t off, std::uint64_t len);
  std::vector<std::byte> materialize_inner(std::uint64_t event_index,
                                           const std::uint64_t* seed) const;

  bool simulate_ = true;
  bool tracing_ = false;
  std::uint64_t size_ = 0;
  std::byte* base_ = nullptr;  // vol_.data() or mmap base

  std::vector<std::byte> vol_;
  std::vector<std::byte> dur_;
  std::vector<std::byte> initial_;  // durable image at trace start
  std::set<std::uint64_t> pending_;
  std::vector<TraceOp> trace_;
  std::uint64_t trace_base_ = 0;  // event count when tracing began

  int fd_ = -1;  // direct mode

  std::uint64_t events_ = 0;
  DomainCounters counters_;
  mutable std::mutex mu_;
};

}  // namespace pmkit
