#pragma once

#include <optional>

#include "remnant/common.hpp"

namespace remnant {

enum class FsKind { Fat12, Fat16, Fat32, Ntfs };

std::string_view to_string(FsKind kind);
bool is_fat(FsKind kind);

// Read-only view over a raw volume image. The backing source is either a
// file opened O_RDONLY or an owned in-memory buffer; copies share it.
// Offsets passed to read() are relative to the base offset.
class VolumeImage {
 public:
  static VolumeImage open(const std::filesystem::path& path, std::uint64_t base_offset = 0);
  static VolumeImage from_bytes(Bytes data, std::uint64_t base_offset = 0);

  std::uint64_t source_size() const;
  std::uint64_t base_offset() const { return base_offset_; }
  /// Bytes addressable from the base offset to the end of the source.
  std::uint64_t size() const { return source_size() - base_offset_; }
  bool read_only() const { return true; }
  const std::optional<std::filesystem::path>& path() const;

  /// Bounds-checked read; throws RangeError rather than returning short.
  void read(std::uint64_t offset, std::span<std::uint8_t> out) const;
  Bytes read(std::uint64_t offset, std::size_t length) const;

 private:
  struct Source;
  VolumeImage(std::shared_ptr<const Source> src, std::uint64_t base_offset);

  std::shared_ptr<const Source> src_;
  std::uint64_t base_offset_ = 0;
};

struct VolumeDescriptor {
  FsKind kind = FsKind::Fat32;
  std::uint32_t bytes_per_sector = 512;
  std::uint32_t sectors_per_cluster = 1;
  std::uint64_t total_sectors = 0;

  // FAT
  std::uint32_t reserved_sectors = 0;
  std::uint32_t fat_count = 0;
  std::uint32_t sectors_per_fat = 0;
  std::uint32_t root_entry_count = 0;   // FAT12/16 fixed root region
  std::uint32_t root_dir_sector = 0;    // first sector of the fixed root region
  std::uint32_t root_dir_sectors = 0;
  std::uint32_t root_cluster = 0;       // FAT32 only
  std::uint32_t first_data_sector = 0;
  std::uint32_t cluster_count = 0;      // data clusters; valid numbers are [2, cluster_count + 2)

  // NTFS
  std::uint64_t mft_lcn = 0;
  std::uint64_t mft_mirror_lcn = 0;
  std::uint32_t mft_record_size = 0;

  std::uint32_t cluster_size() const { return bytes_per_sector * sectors_per_cluster; }
  /// First valid cluster number of the cluster heap.
  std::uint64_t first_cluster() const { return is_fat(kind) ? 2 : 0; }
  /// One past the last valid cluster number.
  std::uint64_t end_cluster() const;
  std::uint64_t volume_bytes() const { return total_sectors * bytes_per_sector; }
};

/// A cluster number together with its absolute byte offset in the backing source.
struct ClusterRef {
  std::uint64_t cluster = 0;
  std::uint64_t byte_offset = 0;
};

VolumeDescriptor detect_filesystem(const VolumeImage& img);

/// Byte offset of a cluster relative to the volume start (base offset excluded).
std::uint64_t cluster_offset(const VolumeDescriptor& desc, std::uint64_t cluster);

ClusterRef make_cluster_ref(const VolumeImage& img, const VolumeDescriptor& desc,
                            std::uint64_t cluster);

/// Concatenation of each listed cluster in order. Any out-of-range cluster
/// aborts the whole read with RangeError.
Bytes read_clusters(const VolumeImage& img, const VolumeDescriptor& desc,
                    std::span<const std::uint64_t> clusters);

/// Reads `count` consecutive clusters starting at `first`.
Bytes read_cluster_run(const VolumeImage& img, const VolumeDescriptor& desc, std::uint64_t first,
                       std::uint64_t count);

}  // namespace remnant
