#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "pmkit/lock_registry.hpp"
#include "pmkit/named_heap.hpp"
#include "pmkit/pool.hpp"
#include "pmkit/redo_log.hpp"
#include "pmkit/undo_log.hpp"

namespace pmkit {

// Uniform transaction handle so structures need not care whether the pool
// runs redo or undo logging.
class AnyTxn {
 public:
  virtual ~AnyTxn() = default;
  virtual void write(std::uint64_t off, std::span<const std::byte> data) = 0;
  virtual void commit() = 0;
  virtual DurableWriter& writer() = 0;
};

class TxnBackend {
 public:
  virtual ~TxnBackend() = default;
  virtual std::unique_ptr<AnyTxn> begin() = 0;
  virtual Pool& pool() = 0;
};

class RedoBackend final : public TxnBackend {
 public:
  explicit RedoBackend(RedoEngine& eng, Pool& pool) : eng_(eng), pool_(pool) {}
  std::unique_ptr<AnyTxn> begin() override;
  Pool& pool() override { return pool_; }

 private:
  RedoEngine& eng_;
  Pool& pool_;
};

class UndoBackend final : public TxnBackend {
 public:
  explicit UndoBackend(UndoEngine& eng, Pool& pool) : eng_(eng), pool_(pool) {}
  std::unique_ptr<AnyTxn> begin() override;
  Pool& pool() override { return pool_; }

 private:
  UndoEngine& eng_;
  Pool& pool_;
};

enum class StructKind { set, ht_closed, ht_open };
enum class LockMode { coarse, fine };

struct StructConfig {
  std::uint64_t bucket_count = 16;  // ht-closed, power of two
  std::uint64_t capacity = 1024;    // ht-open slot count
};

// Keyed container over a pool. add returns false when the key is already
// present, remove returns false when it is absent. snapshot and verify are
// for quiesced structures only.
class IStructure {
 public:
  virtual ~IStructure() = default;
  virtual bool add(std::int64_t key, std::uint64_t value) = 0;
  virtual bool remove(std::int64_t key) = 0;
  virtual std::optional<std::uint64_t> find(std::int64_t key) = 0;

  // All live (key, value) pairs in ascending key order.
  virtual std::vector<std::pair<std::int64_t, std::uint64_t>> snapshot() = 0;
  // Structural invariants: ordering, reachability, reference validity.
  virtual void verify() = 0;
};

// Creation installs the root inside one transaction (or one checkpoint
// interval); attach validates the root tag of an existing pool.
std::unique_ptr<IStructure> create_structure(TxnBackend& be, LockRegistry& locks,
                                             StructKind kind, LockMode mode,
                                             const StructConfig& cfg);
std::unique_ptr<IStructure> attach_structure(TxnBackend& be, LockRegistry& locks,
                                             StructKind kind, LockMode mode);

std::unique_ptr<IStructure> create_structure(NamedSession& ns,
                                             LockRegistry& locks,
                                             StructKind kind, LockMode mode,
                                             const StructConfig& cfg);
std::unique_ptr<IStructure> attach_structure(NamedSession& ns,
                                             LockRegistry& locks,
                                             StructKind kind, LockMode mode);

}  // namespace pmkit
