#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "pmkit/pool.hpp"
#include "pmkit/writer.hpp"

namespace pmkit {

struct TxnCounters {
  std::uint64_t txns_committed = 0;
  std::uint64_t txns_aborted = 0;
  std::uint64_t bytes_logged = 0;
};

struct RecoveryStats {
  std::uint64_t replayed = 0;   // committed transactions applied at open
  std::uint64_t discarded = 0;  // incomplete transactions thrown away
};

class RedoEngine;

// One open redo transaction. Writes go to the transaction's log slot first
// and to the volatile home location; home bytes are flushed only after the
// commit marker is durable. Destroying an open handle aborts it.
class RedoTxn {
 public:
  RedoTxn(RedoTxn&&) noexcept;
  RedoTxn& operator=(RedoTxn&&) noexcept;
  ~RedoTxn();

  void write(std::uint64_t off, std::span<const std::byte> data);
  void commit();
  void abort();
  bool open() const;
  DurableWriter& writer();

 private:
  friend class RedoEngine;
  struct State;
  explicit RedoTxn(std::unique_ptr<State> st);
  std::unique_ptr<State> st_;
};

// Byte-granularity redo logging over a pool. Construction scans every log
// slot: transactions with a valid commit marker are replayed into their
// home locations, all others are dropped. Each live transaction owns one
// slot for its lifetime.
class RedoEngine {
 public:
  explicit RedoEngine(Pool& pool);
  ~RedoEngine();
  RedoEngine(const RedoEngine&) = delete;
  RedoEngine& operator=(const RedoEngine&) = delete;

  RedoTxn begin();
  TxnCounters counters() const;
  RecoveryStats recovery() const { return recovery_; }

  // Requires all transactions finished; marks the pool cleanly shut down.
  void close();

 private:
  friend class RedoTxn;
  friend struct RedoTxn::State;
  void recover();
  void txn_write(RedoTxn::State& st, std::uint64_t off,
                 std::span<const std::byte> data);
  void txn_commit(RedoTxn::State& st);
  void txn_abort(RedoTxn::State& st);
  void finish(RedoTxn::State& st, bool committed);

  Pool& pool_;
  PersistDomain& dom_;
  RecoveryStats recovery_;

  mutable std::mutex mu_;
  std::vector<std::uint32_t> free_slots_;
  std::uint64_t next_seq_ = 1;
  bool activated_ = false;
  TxnCounters counters_;
};

}  // namespace pmkit
