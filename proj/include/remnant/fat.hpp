#pragma once

#include <optional>

#include "remnant/recovery.hpp"

namespace remnant::fat {

inline constexpr std::uint8_t kDeletedMarker = 0xE5;
inline constexpr std::uint8_t kAttrReadOnly = 0x01;
inline constexpr std::uint8_t kAttrHidden = 0x02;
inline constexpr std::uint8_t kAttrSystem = 0x04;
inline constexpr std::uint8_t kAttrVolumeLabel = 0x08;
inline constexpr std::uint8_t kAttrDirectory = 0x10;
inline constexpr std::uint8_t kAttrArchive = 0x20;
inline constexpr std::uint8_t kAttrLongName = 0x0F;
inline constexpr std::size_t kEntrySize = 32;

struct FatDirEntry {
  std::array<std::uint8_t, 11> raw_name{};
  std::uint8_t attributes = 0;
  std::uint32_t first_cluster = 0;  // high half already merged on FAT32
  std::uint32_t size = 0;
  std::uint16_t create_time = 0;
  std::uint16_t create_date = 0;
  std::uint16_t write_time = 0;
  std::uint16_t write_date = 0;
  std::string long_name;            // stitched from preceding LFN slots, may be empty
  std::uint64_t volume_offset = 0;  // byte offset of the 32-byte slot
  std::uint32_t slot = 0;           // index within its directory
  bool orphaned = false;            // found by carving an unreachable directory

  bool deleted() const { return raw_name[0] == kDeletedMarker; }
  bool end_marker() const { return raw_name[0] == 0x00; }
  bool is_long_name() const { return (attributes & 0x3F) == kAttrLongName; }
  bool is_directory() const { return (attributes & kAttrDirectory) != 0 && !is_long_name(); }
  bool is_volume_label() const {
    return (attributes & kAttrVolumeLabel) != 0 && !is_long_name() && !is_directory();
  }
  bool is_dot() const { return raw_name[0] == '.'; }
  /// "NAME.EXT" with the first byte shown as stored (0xE5 for deleted entries).
  std::string short_name() const;
};

/// Decodes one 32-byte slot. `high_cluster` is honoured only for FAT32.
FatDirEntry parse_dir_entry(ByteView slot, bool high_cluster);

struct DirListing {
  std::string path;  // directory containing the entry, "/" for root
  FatDirEntry entry;
};

struct FatScan {
  std::vector<DirListing> entries;
  std::vector<std::string> warnings;
  bool fat_readable = true;
  std::size_t carved_directories = 0;
};

struct ScanOptions {
  bool deep = false;  // carve orphaned directory clusters
};

/// Walks the live tree from the root and, with `deep`, carves orphaned
/// directory clusters. Ordered by (directory path, slot).
FatScan scan_fat_directories(const VolumeImage& img, const VolumeDescriptor& desc,
                             ScanOptions opts = {});

class FatTable {
 public:
  enum class State { Free, Next, EndOfChain, Bad, Reserved };

  static FatTable read(const VolumeImage& img, const VolumeDescriptor& desc);
  /// Every cluster free: stands in for an unreadable FAT.
  static FatTable all_free(const VolumeDescriptor& desc);

  std::size_t size() const { return entries_.size(); }
  std::uint32_t raw(std::uint64_t cluster) const { return entries_.at(cluster); }
  State state(std::uint64_t cluster) const;
  bool allocated(std::uint64_t cluster) const;
  /// Follows a live chain; stops at end-of-chain, loops or invalid links.
  std::vector<std::uint64_t> chain(std::uint64_t start) const;

 private:
  FsKind kind_ = FsKind::Fat32;
  std::vector<std::uint32_t> entries_;
};

struct DeletedFatEntry {
  std::string path;
  std::string name;  // first character substituted with '_' unless an LFN survived
  FatDirEntry entry;
  std::uint32_t first_cluster = 0;
  std::uint32_t size = 0;
  bool directory = false;
  bool orphaned = false;
  std::vector<std::uint64_t> chain;
  Confidence confidence = Confidence::Exact;
  bool chain_truncated = false;

  std::string entry_id() const;
};

/// Selects entries marked 0xE5 plus live-looking entries from orphaned
/// directories (unreachable after a format).
std::vector<DeletedFatEntry> find_deleted(std::span<const DirListing> entries,
                                          const VolumeDescriptor& desc);

struct ChainHypothesis {
  std::vector<std::uint64_t> clusters;
  Confidence confidence = Confidence::Exact;
  bool truncated = false;  // ran off the end of the cluster heap
};

/// Contiguity guess: the first ceil(size / cluster) clusters from the first
/// cluster, skipping clusters that live files currently own.
ChainHypothesis reconstruct_chain(const DeletedFatEntry& entry, const FatTable& fat,
                                  const VolumeDescriptor& desc);

/// Stores the chain hypothesis on the entry (chain, confidence, truncation).
void resolve_chain(DeletedFatEntry& entry, const FatTable& fat, const VolumeDescriptor& desc);

/// Concatenates the resolved chain and truncates to the entry's size.
RecoveredFile recover_fat_file(const VolumeImage& img, const VolumeDescriptor& desc,
                               const DeletedFatEntry& entry, ByteSink& sink);

/// Packed DOS date/time to ISO-8601 (no zone), empty when unset.
std::string dos_datetime_to_iso(std::uint16_t date, std::uint16_t time);

}  // namespace remnant::fat
