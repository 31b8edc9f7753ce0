#pragma once

#include <cstdint>

namespace pmkit {

// Persistent reference: byte offset of an object payload inside its pool.
// Zero is the null reference. The 32-byte allocation header sits right
// before the payload.
struct PRef {
  std::uint64_t off = 0;

  constexpr PRef() = default;
  constexpr explicit PRef(std::uint64_t o) : off(o) {}

  constexpr bool is_null() const { return off == 0; }
  constexpr explicit operator bool() const { return off != 0; }

  friend constexpr bool operator==(PRef a, PRef b) { return a.off == b.off; }
  friend constexpr bool operator!=(PRef a, PRef b) { return a.off != b.off; }
};

inline constexpr PRef kNullRef{};

}  // namespace pmkit
