#pragma once

#include <zlib.h>

#include <cstddef>
#include <cstdint>
#include <span>

namespace pmkit {

// Incremental CRC32 (zlib polynomial). Used for log record payloads,
// catalog entries and checkpoint page images.
class Crc32 {
 public:
  Crc32() : state_(crc32(0L, Z_NULL, 0)) {}

  Crc32& update(std::span<const std::byte> data) {
    state_ = crc32(state_, reinterpret_cast<const Bytef*>(data.data()),
                   static_cast<uInt>(data.size()));
    return *this;
  }

  std::uint32_t value() const { return static_cast<std::uint32_t>(state_); }

 private:
  uLong state_;
};

inline std::uint32_t crc32_of(std::span<const std::byte> data) {
  return Crc32().update(data).value();
}

}  // namespace pmkit
