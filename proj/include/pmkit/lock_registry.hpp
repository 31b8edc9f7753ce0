#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <unordered_map>

namespace pmkit {

// Session-local map from pool offset to mutex. Locks guard live traversal
// and mutation; they are never persisted and mean nothing after a crash,
// recovery starts with a fresh registry.
class LockRegistry {
 public:
  std::mutex& get(std::uint64_t off) {
    std::lock_guard lk(mu_);
    auto& slot = locks_[off];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
  }

 private:
  std::mutex mu_;
  std::unordered_map<std::uint64_t, std::unique_ptr<std::mutex>> locks_;
};

}  // namespace pmkit
