#pragma once

#include <cstdint>

// On-pool layout. The first 4 KiB page is the pool header; the object space
// runs from offset 4096 up to the log region, which occupies the tail of the
// pool. Byte offsets 0..48 are fixed; the rest of the header page holds
// allocator and log geometry written once at creation.

namespace pmkit::layout {

inline constexpr char kMagic[8] = {'P', 'M', 'K', 'T', 'P', 'O', 'O', 'L'};
inline constexpr std::uint32_t kVersion = 1;

// Fixed header fields.
inline constexpr std::uint64_t kMagicOff = 0;
inline constexpr std::uint64_t kVersionOff = 8;
inline constexpr std::uint64_t kBackendOff = 12;
inline constexpr std::uint64_t kPoolSizeOff = 16;
inline constexpr std::uint64_t kRootOff = 24;
inline constexpr std::uint64_t kAllocMetaOff = 32;
inline constexpr std::uint64_t kLogRegionOff = 40;
inline constexpr std::uint64_t kCleanFlagOff = 48;

// Header-page metadata past the fixed fields. kHeaderBytes is the footprint
// of the fixed fields rounded to a flush line; pool references must be 0 or
// land at/after it.
inline constexpr std::uint64_t kHeaderBytes = 64;
inline constexpr std::uint64_t kFreeListHeadOff = 64;   // alloc_meta_ref target
inline constexpr std::uint64_t kSlotBytesOff = 128;     // redo/undo geometry
inline constexpr std::uint64_t kSlotCountOff = 136;
inline constexpr std::uint64_t kSnapshotUnitOff = 144;  // undo geometry
inline constexpr std::uint64_t kCatalogCapOff = 152;    // named geometry
inline constexpr std::uint64_t kSessionCounterOff = 160;

inline constexpr std::uint64_t kHeaderPage = 4096;
inline constexpr std::uint64_t kPageSize = 4096;

// Allocator. Block headers sit inline before payloads; persistent references
// address payloads (header at ref - kAllocHeaderSize).
inline constexpr std::uint64_t kAllocHeaderSize = 32;
inline constexpr std::uint64_t kAllocAlign = 16;
inline constexpr std::uint64_t kAllocSizeOff = 0;   // payload bytes
inline constexpr std::uint64_t kAllocStateOff = 8;
inline constexpr std::uint64_t kAllocNextFreeOff = 16;
inline constexpr std::uint64_t kAllocLive = 0xA110C8EDull;
inline constexpr std::uint64_t kAllocFree = 0x00F7EE00ull;

// Transaction log slots. A slot starts with its header (active txn id; the
// undo variant adds a durable record-bytes length), then records. A record
// is a 16-byte header {target u64, length u32, checksum u32} followed by the
// payload; the top byte of the target field carries the variant tag. A
// commit marker is a record with length 0xFFFFFFFF whose 8-byte payload is
// the transaction id.
inline constexpr std::uint64_t kRedoSlotHeader = 8;
inline constexpr std::uint64_t kUndoSlotHeader = 16;
inline constexpr std::uint64_t kRecordHeader = 16;
inline constexpr std::uint64_t kCommitMarkerBytes = 24;
inline constexpr std::uint32_t kMarkerLength = 0xFFFFFFFFu;
inline constexpr std::uint8_t kTagRedoData = 0x01;
inline constexpr std::uint8_t kTagRedoCommit = 0x02;
inline constexpr std::uint8_t kTagUndoSnapshot = 0x11;
inline constexpr std::uint8_t kTagUndoCommit = 0x12;

inline constexpr std::uint64_t tag_of(std::uint64_t target_field) {
  return target_field >> 56;
}
inline constexpr std::uint64_t offset_of(std::uint64_t target_field) {
  return target_field & ((1ull << 56) - 1);
}
inline constexpr std::uint64_t make_target(std::uint8_t tag, std::uint64_t off) {
  return (static_cast<std::uint64_t>(tag) << 56) | off;
}

// Named backend log region: one page holding the epoch counter, the
// catalog (fixed 52-byte slots, zero name byte = free slot), then the
// checkpoint epoch area on a page boundary. Catalog slots change in place;
// their pages ride in checkpoint epochs like object pages, so the epoch
// counter gets a page of its own and is never replayed over.
inline constexpr std::uint64_t kNamedNextEpochOff = 0;  // relative to region start
inline constexpr std::uint64_t kCatalogEntryBytes = 52;  // 32 name + 8 off + 8 size + 4 crc
inline constexpr std::uint64_t kNameMax = 32;
inline constexpr std::uint64_t kEpochHeaderBytes = 16;   // {epoch_id u64, page_count u64}
inline constexpr std::uint64_t kPageRecordHeader = 16;   // {page_index u64, crc u32, pad u32}
inline constexpr std::uint64_t kEpochMarkerBytes = 24;   // {tag u32, crc u32, epoch_id u64, page_count u64}
inline constexpr std::uint32_t kEpochMarkerTag = 0x45504F43u;  // "EPOC"

}  // namespace pmkit::layout
