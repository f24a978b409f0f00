#pragma once

#include <map>
#include <optional>
#include <variant>

#include "remnant/recovery.hpp"

namespace remnant::ntfs {

inline constexpr std::uint32_t kAttrStandardInformation = 0x10;
inline constexpr std::uint32_t kAttrFileName = 0x30;
inline constexpr std::uint32_t kAttrData = 0x80;
inline constexpr std::uint32_t kAttrBitmap = 0xB0;
inline constexpr std::uint32_t kAttrEnd = 0xFFFFFFFF;

inline constexpr std::uint16_t kFlagInUse = 0x0001;
inline constexpr std::uint16_t kFlagDirectory = 0x0002;

/// Records below this index are reserved for filesystem metadata.
inline constexpr std::uint64_t kFirstUserRecord = 16;

struct MftRecordHeader {
  std::array<char, 4> signature{};
  std::uint16_t usa_offset = 0;
  std::uint16_t usa_count = 0;
  std::uint64_t lsn = 0;
  std::uint16_t sequence = 0;
  std::uint16_t link_count = 0;
  std::uint16_t first_attribute_offset = 0;
  std::uint16_t flags = 0;
  std::uint32_t used_size = 0;
  std::uint32_t allocated_size = 0;
  std::uint64_t base_record = 0;
  /// Only present in 48-byte headers; the older 42-byte layout stops short of it.
  std::optional<std::uint32_t> record_number;

  bool in_use() const { return (flags & kFlagInUse) != 0; }
  bool is_directory() const { return (flags & kFlagDirectory) != 0; }
};

/// Parses and validates the fixed header. Throws CorruptError when the
/// signature is not "FILE" or the offsets are inconsistent.
MftRecordHeader parse_record_header(ByteView record);

/// Reverses the update-sequence fixup in place. Returns false when a sector's
/// trailing word does not match the update sequence number.
bool apply_fixup(std::span<std::uint8_t> record, std::uint32_t stride = 512);

/// True iff the in-use bit is clear. Deleted directories are deleted too;
/// tell them apart with MftRecordHeader::is_directory().
bool is_deleted(const MftRecordHeader& hdr);

struct Run {
  std::uint64_t length = 0;
  std::optional<std::uint64_t> lcn;  // nullopt = sparse

  bool sparse() const { return !lcn.has_value(); }
  bool operator==(const Run&) const = default;
};

struct RunList {
  std::vector<Run> runs;

  std::uint64_t total_clusters() const;
  bool operator==(const RunList&) const = default;
};

/// Decodes an NTFS mapping-pairs array. LCN deltas are signed and cumulative.
RunList decode_data_runs(ByteView raw);

struct ParsedAttribute {
  std::uint32_t type = 0;
  std::uint32_t record_offset = 0;  // where the attribute header sits in the record
  std::uint32_t length = 0;
  bool resident = true;
  std::string name;
  std::uint16_t flags = 0;
  std::uint16_t id = 0;

  Bytes value;  // resident only

  std::uint64_t start_vcn = 0;
  std::uint64_t last_vcn = 0;
  std::uint16_t compression_unit = 0;
  std::uint64_t allocated_size = 0;
  std::uint64_t real_size = 0;
  std::uint64_t initialized_size = 0;
  Bytes run_list;  // non-resident only
};

struct AttributeWalk {
  std::vector<ParsedAttribute> attributes;
  bool corrupt = false;
  std::string error;

  const ParsedAttribute* find(std::uint32_t type, bool unnamed_only = false) const;
};

/// Walks attributes from the first-attribute offset to the terminator.
/// Overruns stop the walk and return what was parsed with `corrupt` set.
AttributeWalk parse_attributes(ByteView record, const MftRecordHeader& hdr);

struct StandardInfoView {
  std::uint64_t creation_time = 0;
  std::uint64_t modification_time = 0;
  std::uint64_t mft_change_time = 0;
  std::uint64_t access_time = 0;
  std::uint32_t file_attributes = 0;
};

std::optional<StandardInfoView> standard_info(const AttributeWalk& walk);

struct FileNameView {
  std::uint64_t parent_reference = 0;
  std::uint64_t creation_time = 0;
  std::uint64_t modification_time = 0;
  std::uint64_t allocated_size = 0;
  std::uint64_t real_size = 0;
  std::uint8_t name_space = 0;
  std::string name;  // UTF-8
};

/// Best $FILE_NAME of the record: Win32 names win over DOS short names.
std::optional<FileNameView> file_name(const AttributeWalk& walk);

struct MftRecord {
  MftRecordHeader header;
  Bytes bytes;                  // fixup already applied
  std::uint64_t index = 0;      // position in the MFT, or header record number for carved records
  std::uint64_t volume_offset = 0;
  bool orphan = false;          // carved from outside the live MFT
};

struct MftScan {
  std::vector<MftRecord> records;
  std::size_t empty_records = 0;
  std::size_t bad_signature = 0;
  std::size_t corrupt_fixup = 0;
  RunList mft_runs;
};

/// Bootstraps from record 0 at the boot sector's MFT LCN, follows the
/// $MFT data runs and yields every "FILE" record in index order.
/// Throws CorruptError("MFT unreadable") when record 0 cannot be used.
MftScan scan_mft(const VolumeImage& img, const VolumeDescriptor& desc);

/// Sorted, merged cluster intervals claimed by in-use records.
class ClusterClaims {
 public:
  void add(std::uint64_t first, std::uint64_t count);
  bool overlaps(std::uint64_t first, std::uint64_t count) const;
  bool contains(std::uint64_t cluster) const { return overlaps(cluster, 1); }
  std::size_t interval_count() const { return intervals_.size(); }

 private:
  std::map<std::uint64_t, std::uint64_t> intervals_;  // first -> one past last
};

ClusterClaims live_claims(const MftScan& scan, const VolumeDescriptor& desc);

/// Deep scan: looks for "FILE" records at sector granularity outside the
/// live MFT and outside clusters claimed by in-use records.
MftScan carve_orphan_records(const VolumeImage& img, const VolumeDescriptor& desc,
                             const MftScan& live, const ClusterClaims& claims);

/// One file-level record turned into something recoverable. For deleted
/// entries the in-use bit is clear; orphans count as deleted regardless.
struct NtfsEntry {
  std::optional<std::uint64_t> record_index;
  std::uint64_t volume_offset = 0;
  std::string name;
  std::uint64_t parent_reference = 0;
  std::uint64_t real_size = 0;
  std::uint64_t allocated_size = 0;
  std::uint64_t creation_time = 0;
  std::uint64_t modification_time = 0;
  std::uint16_t compression_unit = 0;
  bool in_use = false;
  bool directory = false;
  bool orphan = false;
  bool attributes_corrupt = false;
  std::variant<std::monostate, Bytes, RunList> data;  // monostate: no unnamed $DATA
  Confidence confidence = Confidence::Exact;

  bool deleted() const { return !in_use || orphan; }
  std::string entry_id() const;
};

/// Converts a record into an entry. Records without $FILE_NAME are kept
/// under a synthetic `record-<index>` name with heuristic confidence.
NtfsEntry make_entry(const MftRecord& rec);

/// All user-level entries (system records skipped), live and deleted, in
/// record order followed by carved orphans in volume order.
std::vector<NtfsEntry> collect_entries(std::span<const MftRecord> records);

/// Copies the entry's unnamed data stream into `sink`, truncated to the
/// real size. Extents claimed by live records are flagged overwritten-risk.
RecoveredFile recover_ntfs_file(const VolumeImage& img, const VolumeDescriptor& desc,
                                const NtfsEntry& entry, ByteSink& sink,
                                const ClusterClaims* claims = nullptr);

/// 100ns ticks since 1601-01-01 rendered as ISO-8601 UTC.
std::string filetime_to_iso(std::uint64_t filetime);

}  // namespace remnant::ntfs
