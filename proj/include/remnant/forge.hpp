#pragma once

#include <optional>

#include <json.hpp>

#include "remnant/ntfs.hpp"

// Synthetic FAT/NTFS volume writer with ground truth. Deliberately shares no
// parsing code with the recovery side: it is the oracle the parsers are
// checked against.
namespace remnant::forge {

class ForgeError : public Error {
 public:
  using Error::Error;
};

struct FileSpec {
  std::string name;
  FileClass file_class = FileClass::Document;
  std::uint64_t size = 0;
  std::uint64_t seed = 0;
  std::string directory;  // FAT subdirectory name, empty for the root; ignored on NTFS
  bool fragment = false;  // split the allocation in two
  std::optional<std::uint64_t> at_cluster;
  /// NTFS: file-relative cluster range left unallocated (reads as zeros).
  std::optional<std::pair<std::uint64_t, std::uint64_t>> sparse;
  /// NTFS: legacy 42-byte record header with the $DATA attribute at 0x188.
  bool reference_layout = false;
};

struct Geometry {
  std::uint64_t volume_bytes = 64ull << 20;
  std::uint32_t bytes_per_sector = 512;
  std::uint32_t sectors_per_cluster = 1;
  std::uint32_t root_entries = 512;  // FAT12/16 only
  std::uint32_t mft_record_size = 1024;
  std::uint32_t spare_records = 16;
  std::uint32_t fragment_gap = 4;  // clusters between the halves of a fragmented file
  bool mft_fragmented = false;
  std::string label = "REMNANT";
};

struct CorpusSpec {
  FsKind kind = FsKind::Fat32;
  Geometry geometry;
  std::vector<FileSpec> files;
};

/// Accepts "fat12", "fat16", "fat32" or "ntfs" in any case.
FsKind fs_kind_from_string(std::string_view s);

FileSpec file_spec_from_json(const nlohmann::json& j);
CorpusSpec corpus_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CorpusSpec& spec);

enum class FileState { Live, Deleted, Formatted, Sanitized };
std::string_view to_string(FileState s);

struct FileTruth {
  std::string name;
  std::string directory;
  FileClass file_class = FileClass::Unknown;
  std::uint64_t size = 0;
  std::uint64_t seed = 0;
  std::string sha256;
  std::vector<Extent> extents;
  std::optional<std::pair<std::uint64_t, std::uint64_t>> sparse;
  std::uint64_t entry_offset = 0;  // FAT short entry slot or NTFS record, volume-relative
  std::optional<std::uint64_t> mft_index;
  bool resident = false;
  FileState state = FileState::Live;
};

struct GroundTruth {
  std::string image_sha256;
  FsKind kind = FsKind::Fat32;
  std::uint64_t volume_bytes = 0;
  std::uint32_t bytes_per_sector = 0;
  std::uint32_t cluster_size = 0;
  std::uint32_t mft_record_size = 0;
  std::uint64_t mft_lcn = 0;
  std::vector<FileTruth> files;
  std::vector<std::string> mutations;

  const FileTruth* find(std::string_view name) const;
};

nlohmann::json to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const nlohmann::json& j);

/// Seeded pseudo-random bytes behind the class's magic prefix.
Bytes generate_content(FileClass cls, std::uint64_t size, std::uint64_t seed);
/// generate_content with the sparse range (if any) zeroed, i.e. what a reader sees.
Bytes expected_content(const FileTruth& f, std::uint32_t cluster_size);

/// Mapping-pairs encoder with minimal field widths.
Bytes encode_data_runs(const ntfs::RunList& runs);

class ForgedImage {
 public:
  static ForgedImage build(const CorpusSpec& spec);

  const Bytes& bytes() const { return image_; }
  /// Ground truth with the current image hash filled in.
  GroundTruth truth() const;
  VolumeImage view() const { return VolumeImage::from_bytes(image_); }
  void save(const std::filesystem::path& image, const std::filesystem::path& sidecar) const;

  /// Marks one live file deleted without touching its clusters; "*" deletes every live file.
  void delete_metadata_only(std::string_view name);
  /// Rewrites the boot sector and allocation structures, empties the root.
  void quick_format();
  /// Zeroes every data cluster, then quick formats.
  void full_overwrite();
  /// Adds a live file after the fact, reusing free (possibly deleted) clusters.
  const FileTruth& write_file(const FileSpec& spec);
  /// Breaks the update-sequence check of one MFT record.
  void corrupt_fixup(std::uint64_t mft_index);

  std::uint64_t cluster_offset(std::uint64_t cluster) const;
  std::uint32_t cluster_size() const { return bps_ * spc_; }

 private:
  ForgedImage() = default;

  struct Directory {
    std::string name;
    std::vector<std::uint64_t> clusters;
    std::uint64_t entry_offset = 0;  // of its slot in the root
  };

  void build_fat(const CorpusSpec& spec);
  void build_ntfs(const CorpusSpec& spec);

  std::vector<std::uint64_t> allocate(std::uint64_t count, const FileSpec& spec);
  std::vector<std::uint64_t> take_run(std::uint64_t count, std::uint64_t from);
  void write_content(FileTruth& truth, std::span<const std::uint64_t> clusters);
  FileTruth& find_live(std::string_view name);

  // FAT
  void fat_write_boot();
  void fat_reset_tables();
  void fat_set(std::uint64_t cluster, std::uint32_t value);
  void fat_link(std::span<const std::uint64_t> chain);
  std::uint32_t fat_eoc() const;
  Directory& fat_directory(const std::string& name);
  std::uint64_t fat_free_slot(const Directory* dir, std::size_t slots);
  void fat_add_entry(const Directory* dir, const std::string& name, std::uint8_t attr,
                     std::uint32_t first_cluster, std::uint32_t size, FileTruth* truth);
  void fat_add_file(const FileSpec& spec);
  void fat_delete(FileTruth& f);
  void fat_quick_format();

  // NTFS
  void ntfs_write_boot();
  void ntfs_write_system(std::uint32_t mft_records);
  void ntfs_write_bitmap();
  Bytes ntfs_record(std::uint64_t index, std::uint16_t flags, const std::string& name,
                    std::uint64_t parent, std::variant<Bytes, ntfs::RunList> data, std::uint64_t real_size,
                    bool legacy_header) const;
  void ntfs_store_record(std::uint64_t index, ByteView record);
  std::uint64_t ntfs_record_offset(std::uint64_t index) const;
  void ntfs_add_file(const FileSpec& spec);
  void ntfs_delete(FileTruth& f);
  void ntfs_quick_format();

  FsKind kind_ = FsKind::Fat32;
  Geometry geo_;
  Bytes image_;
  std::uint32_t bps_ = 512;
  std::uint32_t spc_ = 1;
  std::vector<bool> used_;  // cluster allocation as the forge tracks it
  std::vector<FileTruth> files_;
  std::vector<std::string> mutations_;

  // FAT geometry
  std::uint32_t reserved_ = 0;
  std::uint32_t fat_sectors_ = 0;
  std::uint32_t root_dir_sectors_ = 0;
  std::uint32_t first_data_sector_ = 0;
  std::uint32_t cluster_count_ = 0;
  std::vector<Directory> dirs_;
  std::map<std::uint64_t, std::vector<std::uint64_t>> lfn_slots_;  // short entry -> its LFN slots

  // NTFS geometry
  std::uint64_t total_clusters_ = 0;
  std::uint64_t mft_lcn_ = 0;
  std::uint64_t mirror_lcn_ = 0;
  std::uint64_t bitmap_lcn_ = 0;
  std::uint64_t bitmap_clusters_ = 0;
  ntfs::RunList mft_runs_;
  std::uint32_t mft_records_ = 0;   // capacity of the current MFT
  std::uint64_t next_record_ = 16;  // next free user record
};

// Applies a JSON list of mutations in order, e.g.
//   [{"op": "delete", "name": "*"}, {"op": "quick_format"},
//    {"op": "write", "file": {...}}, {"op": "full_overwrite"}, {"op": "corrupt_fixup", "record": 17}]
void apply_mutations(ForgedImage& image, const nlohmann::json& ops);

/// 64 MiB corpus with three files per class, sizes from 1 B to 4 MiB. FAT
/// files live in the DATA subdirectory; one NTFS file uses the reference
/// record layout and the MFT is split in two runs.
CorpusSpec table1_corpus(FsKind kind);

}  // namespace remnant::forge
