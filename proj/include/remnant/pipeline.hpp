#pragma once

#include <optional>

#include "remnant/recovery.hpp"

// Filesystem-agnostic scan and recovery on top of the FAT and NTFS engines.
namespace remnant {

enum class FsChoice { Auto, Fat, Ntfs };
FsChoice fs_choice_from_string(std::string_view s);

struct PipelineOptions {
  FsChoice fs = FsChoice::Auto;
  bool deep = false;
  unsigned jobs = 1;
};

struct EntryRow {
  std::string entry_id;
  std::string path;
  std::string name;
  bool deleted = false;
  bool directory = false;
  bool orphan = false;
  std::uint64_t size = 0;
  std::string created;
  std::string modified;
  Confidence confidence = Confidence::Exact;
  std::uint64_t entry_offset = 0;
};

struct ScanResult {
  VolumeDescriptor desc;
  std::vector<EntryRow> entries;
  std::vector<std::string> warnings;
  std::size_t carved = 0;  // orphaned directories or MFT records found by --deep
};

/// Detects the filesystem (honouring `fs`) and returns it, or throws FormatError.
VolumeDescriptor detect(const VolumeImage& img, FsChoice fs);

/// Live and deleted entries; directories included, dot entries and labels not.
ScanResult scan_volume(const VolumeImage& img, const PipelineOptions& opts);

struct RecoveryResult {
  VolumeDescriptor desc;
  std::vector<RecoveredFile> files;  // deterministic entry order regardless of jobs
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
};

/// Recovers every deleted non-directory entry. Without `out_dir` the bytes
/// are only hashed.
RecoveryResult recover_volume(const VolumeImage& img, const PipelineOptions& opts,
                              const std::optional<std::filesystem::path>& out_dir);

}  // namespace remnant
