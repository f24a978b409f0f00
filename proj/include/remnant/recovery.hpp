#pragma once

#include <fstream>
#include <optional>

#include "remnant/volume.hpp"

namespace remnant {

enum class Confidence { Exact, Heuristic, ContiguousHeuristic, FragmentedUnknown };

std::string_view to_string(Confidence c);
Confidence confidence_from_string(std::string_view s);

/// File-type classes, one per row of the recovery table.
enum class FileClass { Document, Image, Audio, Video, Compressed, Executable, Unknown };

inline constexpr std::array<FileClass, 6> kTableClasses = {
    FileClass::Document, FileClass::Image,      FileClass::Audio,
    FileClass::Video,    FileClass::Compressed, FileClass::Executable};

std::string_view to_string(FileClass c);
FileClass file_class_from_string(std::string_view s);

/// Magic bytes first; the name's extension only when no signature matches.
FileClass classify(ByteView head, std::string_view name);

/// A contiguous cluster range; `sparse` extents have no backing clusters.
struct Extent {
  std::uint64_t first = 0;
  std::uint64_t count = 0;
  bool sparse = false;

  bool operator==(const Extent&) const = default;
};

std::vector<Extent> coalesce(std::span<const std::uint64_t> clusters);

struct RecoveredFile {
  std::string name;
  std::optional<std::filesystem::path> output_path;
  std::uint64_t length = 0;
  std::uint64_t expected_size = 0;
  std::string sha256;
  FsKind fs = FsKind::Fat32;
  std::string entry_id;
  std::uint64_t entry_offset = 0;  // byte offset of the source directory entry / MFT record
  std::vector<Extent> clusters;
  Confidence confidence = Confidence::Exact;
  FileClass file_class = FileClass::Unknown;
  std::vector<std::string> flags;

  bool has_flag(std::string_view f) const;
};

class ByteSink {
 public:
  virtual ~ByteSink() = default;
  virtual void write(ByteView data) = 0;
};

class MemorySink : public ByteSink {
 public:
  void write(ByteView data) override { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
  const Bytes& bytes() const { return bytes_; }

 private:
  Bytes bytes_;
};

class FileSink : public ByteSink {
 public:
  explicit FileSink(const std::filesystem::path& path);
  void write(ByteView data) override;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// Discards payload bytes; used when only hashes and lengths are wanted.
class NullSink : public ByteSink {
 public:
  void write(ByteView) override {}
};

// Tees recovered bytes into a sink while hashing and keeping the leading
// bytes for classification.
class RecoveryWriter {
 public:
  explicit RecoveryWriter(ByteSink& sink) : sink_(sink) {}
  void write(ByteView data);
  void write_zeros(std::uint64_t count);
  std::uint64_t length() const { return length_; }
  const Bytes& head() const { return head_; }
  std::string finish() { return hash_.hex_digest(); }

 private:
  static constexpr std::size_t kHeadBytes = 64;
  ByteSink& sink_;
  Sha256 hash_;
  Bytes head_;
  std::uint64_t length_ = 0;
};

/// Throws Error when `out_dir` lives on the media backing `image` and the
/// caller has not opted in. Only block-device images can share media with a
/// directory; regular image files never do.
void ensure_separate_media(const std::filesystem::path& image, const std::filesystem::path& out_dir,
                           bool allow_same_media);

/// Filesystem-safe output name; distinct entries never collide thanks to the id prefix.
std::string output_file_name(std::string_view entry_id, std::string_view name);

}  // namespace remnant
