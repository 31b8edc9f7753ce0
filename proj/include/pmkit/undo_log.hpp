#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "pmkit/pool.hpp"
#include "pmkit/redo_log.hpp"  // TxnCounters, RecoveryStats
#include "pmkit/writer.hpp"

namespace pmkit {

class UndoEngine;

// One open undo transaction. The first write to each snapshot unit logs the
// unit's pre-image; afterwards writes go straight to their home locations.
// Destroying an open handle rolls it back.
class UndoTxn {
 public:
  UndoTxn(UndoTxn&&) noexcept;
  UndoTxn& operator=(UndoTxn&&) noexcept;
  ~UndoTxn();

  void write(std::uint64_t off, std::span<const std::byte> data);
  void commit();
  void abort();
  bool open() const;
  DurableWriter& writer();

 private:
  friend class UndoEngine;
  struct State;
  explicit UndoTxn(std::unique_ptr<State> st);
  std::unique_ptr<State> st_;
};

// Unit-granularity undo logging: in-place stores guarded by pre-image
// snapshots. Each slot header carries the count of record bytes known
// durable, so recovery can tell a torn log tail from real corruption; a
// checksum failure inside that window refuses the pool. Incomplete
// transactions are rolled back at open, committed ones need no work.
class UndoEngine {
 public:
  explicit UndoEngine(Pool& pool);
  ~UndoEngine();
  UndoEngine(const UndoEngine&) = delete;
  UndoEngine& operator=(const UndoEngine&) = delete;

  UndoTxn begin();
  TxnCounters counters() const;
  RecoveryStats recovery() const { return recovery_; }
  void close();

 private:
  friend class UndoTxn;
  friend struct UndoTxn::State;
  void recover();
  void rollback_records(std::uint64_t slot_off, std::uint64_t rec_bytes);
  void txn_write(UndoTxn::State& st, std::uint64_t off,
                 std::span<const std::byte> data);
  void txn_commit(UndoTxn::State& st);
  void txn_abort(UndoTxn::State& st);
  void finish(UndoTxn::State& st, bool committed);

  Pool& pool_;
  PersistDomain& dom_;
  std::uint64_t unit_;
  RecoveryStats recovery_;

  mutable std::mutex mu_;
  std::vector<std::uint32_t> free_slots_;
  std::uint64_t next_seq_ = 1;
  bool activated_ = false;
  TxnCounters counters_;
};

}  // namespace pmkit
