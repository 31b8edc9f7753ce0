#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pmkit/bytes.hpp"
#include "pmkit/crc.hpp"
#include "pmkit/layout.hpp"

// Wire format shared by the redo and undo logs. A record is
//   target u64 | length u32 | crc u32 | payload[length]
// with the variant tag in the top byte of target and the checksum taken
// over the first 12 header bytes plus the payload. A commit marker is a
// record whose length field is 0xFFFFFFFF and whose payload is the 8-byte
// transaction id.

namespace pmkit::logfmt {

struct RecordHead {
  std::uint64_t target = 0;
  std::uint32_t length = 0;
  std::uint32_t crc = 0;

  std::uint8_t tag() const { return static_cast<std::uint8_t>(target >> 56); }
  std::uint64_t offset() const { return layout::offset_of(target); }
  bool is_marker() const { return length == layout::kMarkerLength; }
};

inline RecordHead read_head(const std::byte* p) {
  RecordHead h;
  h.target = bytes::load_u64(p);
  h.length = bytes::load_u32(p + 8);
  h.crc = bytes::load_u32(p + 12);
  return h;
}

inline std::uint32_t body_crc(std::uint64_t target, std::uint32_t length,
                              std::span<const std::byte> payload) {
  std::byte head[12];
  bytes::store_u64(head, target);
  bytes::store_u32(head + 8, length);
  return Crc32().update(head).update(payload).value();
}

inline std::vector<std::byte> encode_record(std::uint8_t tag, std::uint64_t off,
                                            std::span<const std::byte> payload) {
  std::uint64_t target = layout::make_target(tag, off);
  auto length = static_cast<std::uint32_t>(payload.size());
  std::vector<std::byte> out(layout::kRecordHeader + payload.size());
  bytes::store_u64(out.data(), target);
  bytes::store_u32(out.data() + 8, length);
  bytes::store_u32(out.data() + 12, body_crc(target, length, payload));
  std::copy(payload.begin(), payload.end(),
            out.begin() + layout::kRecordHeader);
  return out;
}

inline std::vector<std::byte> encode_marker(std::uint8_t tag,
                                            std::uint64_t txn_id) {
  std::byte payload[8];
  bytes::store_u64(payload, txn_id);
  std::uint64_t target = layout::make_target(tag, 0);
  std::vector<std::byte> out(layout::kCommitMarkerBytes);
  bytes::store_u64(out.data(), target);
  bytes::store_u32(out.data() + 8, layout::kMarkerLength);
  bytes::store_u32(out.data() + 12,
                   body_crc(target, layout::kMarkerLength, payload));
  std::copy(payload, payload + 8, out.begin() + layout::kRecordHeader);
  return out;
}

// Checks the 24 bytes at p against tag and transaction id.
inline bool marker_valid(const std::byte* p, std::uint8_t tag,
                         std::uint64_t txn_id) {
  RecordHead h = read_head(p);
  if (!h.is_marker() || h.tag() != tag || h.offset() != 0) return false;
  std::span<const std::byte> payload{p + layout::kRecordHeader, 8};
  if (h.crc != body_crc(h.target, h.length, payload)) return false;
  return bytes::load_u64(p + layout::kRecordHeader) == txn_id;
}

}  // namespace pmkit::logfmt
