#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>

namespace pmkit {

// All on-pool integers are little-endian. The toolkit targets LE hosts and
// reads/writes them with memcpy.
static_assert(std::endian::native == std::endian::little,
              "pool file format requires a little-endian host");

namespace bytes {

inline std::uint64_t load_u64(const std::byte* p) {
  std::uint64_t v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline std::uint32_t load_u32(const std::byte* p) {
  std::uint32_t v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline std::int64_t load_i64(const std::byte* p) {
  std::int64_t v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store_u64(std::byte* p, std::uint64_t v) { std::memcpy(p, &v, sizeof v); }
inline void store_u32(std::byte* p, std::uint32_t v) { std::memcpy(p, &v, sizeof v); }
inline void store_i64(std::byte* p, std::int64_t v) { std::memcpy(p, &v, sizeof v); }

}  // namespace bytes

template <typename T>
std::span<const std::byte> bytes_of(const T& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  return {reinterpret_cast<const std::byte*>(&v), sizeof(T)};
}

}  // namespace pmkit
