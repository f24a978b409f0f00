#include "remnant/recovery.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <cctype>

namespace remnant {

std::string_view to_string(Confidence c) {
  switch (c) {
    case Confidence::Exact: return "exact";
    case Confidence::Heuristic: return "heuristic";
    case Confidence::ContiguousHeuristic: return "contiguous-heuristic";
    case Confidence::FragmentedUnknown: return "fragmented-unknown";
  }
  return "?";
}

Confidence confidence_from_string(std::string_view s) {
  if (s == "exact") return Confidence::Exact;
  if (s == "heuristic") return Confidence::Heuristic;
  if (s == "contiguous-heuristic") return Confidence::ContiguousHeuristic;
  if (s == "fragmented-unknown") return Confidence::FragmentedUnknown;
  throw Error("unknown confidence '" + std::string(s) + "'");
}

std::string_view to_string(FileClass c) {
  switch (c) {
    case FileClass::Document: return "document";
    case FileClass::Image: return "image";
    case FileClass::Audio: return "audio";
    case FileClass::Video: return "video";
    case FileClass::Compressed: return "compressed";
    case FileClass::Executable: return "executable";
    case FileClass::Unknown: return "unknown";
  }
  return "?";
}

FileClass file_class_from_string(std::string_view s) {
  for (auto c : kTableClasses) {
    if (to_string(c) == s) return c;
  }
  if (s == "unknown") return FileClass::Unknown;
  throw Error("unknown file class '" + std::string(s) + "'");
}

namespace {

bool starts_with(ByteView head, std::initializer_list<std::uint8_t> magic, std::size_t at = 0) {
  if (head.size() < at + magic.size()) return false;
  return std::equal(magic.begin(), magic.end(), head.begin() + static_cast<std::ptrdiff_t>(at));
}

std::string lower_extension(std::string_view name) {
  auto dot = name.rfind('.');
  if (dot == std::string_view::npos) return {};
  std::string ext(name.substr(dot + 1));
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext;
}

}  // namespace

FileClass classify(ByteView head, std::string_view name) {
  if (starts_with(head, {'%', 'P', 'D', 'F', '-'}) ||
      starts_with(head, {0xD0, 0xCF, 0x11, 0xE0}) || starts_with(head, {'{', '\\', 'r', 't', 'f'})) {
    return FileClass::Document;
  }
  if (starts_with(head, {0xFF, 0xD8, 0xFF}) || starts_with(head, {0x89, 'P', 'N', 'G'}) ||
      starts_with(head, {'G', 'I', 'F', '8'}) || starts_with(head, {'B', 'M'})) {
    return FileClass::Image;
  }
  if (starts_with(head, {'I', 'D', '3'}) || starts_with(head, {'R', 'I', 'F', 'F'}) ||
      starts_with(head, {'f', 'L', 'a', 'C'}) || starts_with(head, {'O', 'g', 'g', 'S'})) {
    if (starts_with(head, {'A', 'V', 'I', ' '}, 8)) return FileClass::Video;
    return FileClass::Audio;
  }
  if (starts_with(head, {'f', 't', 'y', 'p'}, 4) || starts_with(head, {0x1A, 0x45, 0xDF, 0xA3}) ||
      starts_with(head, {'F', 'L', 'V'})) {
    return FileClass::Video;
  }
  if (starts_with(head, {'P', 'K', 0x03, 0x04}) || starts_with(head, {'R', 'a', 'r', '!'}) ||
      starts_with(head, {0x1F, 0x8B}) || starts_with(head, {'7', 'z', 0xBC, 0xAF})) {
    return FileClass::Compressed;
  }
  if (starts_with(head, {0x7F, 'E', 'L', 'F'}) || starts_with(head, {'M', 'Z'})) {
    return FileClass::Executable;
  }

  static const std::vector<std::pair<std::vector<std::string_view>, FileClass>> by_ext = {
      {{"txt", "pdf", "doc", "docx", "rtf", "ppt", "xlsx", "odt"}, FileClass::Document},
      {{"jpg", "jpeg", "png", "bmp", "gif", "tif", "tiff"}, FileClass::Image},
      {{"mp3", "wav", "flac", "ogg", "aac"}, FileClass::Audio},
      {{"mp4", "avi", "flv", "mkv", "mov"}, FileClass::Video},
      {{"zip", "rar", "tar", "gz", "7z"}, FileClass::Compressed},
      {{"exe", "elf", "bin", "dll", "so"}, FileClass::Executable},
  };
  const auto ext = lower_extension(name);
  for (const auto& [exts, cls] : by_ext) {
    if (std::find(exts.begin(), exts.end(), ext) != exts.end()) return cls;
  }
  return FileClass::Unknown;
}

std::vector<Extent> coalesce(std::span<const std::uint64_t> clusters) {
  std::vector<Extent> out;
  for (auto c : clusters) {
    if (!out.empty() && !out.back().sparse && out.back().first + out.back().count == c) {
      ++out.back().count;
    } else {
      out.push_back({c, 1, false});
    }
  }
  return out;
}

bool RecoveredFile::has_flag(std::string_view f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

FileSink::FileSink(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
  if (!out_) throw Error("cannot create output file " + path.string());
}

void FileSink::write(ByteView data) {
  out_.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out_) throw Error("write failed for " + path_.string());
}

void RecoveryWriter::write(ByteView data) {
  if (data.empty()) return;
  if (head_.size() < kHeadBytes) {
    auto take = std::min(kHeadBytes - head_.size(), data.size());
    head_.insert(head_.end(), data.begin(), data.begin() + static_cast<std::ptrdiff_t>(take));
  }
  hash_.update(data);
  sink_.write(data);
  length_ += data.size();
}

void RecoveryWriter::write_zeros(std::uint64_t count) {
  static const Bytes zeros(64 * 1024, 0);
  while (count > 0) {
    auto n = static_cast<std::size_t>(std::min<std::uint64_t>(count, zeros.size()));
    write(ByteView(zeros.data(), n));
    count -= n;
  }
}

void ensure_separate_media(const std::filesystem::path& image, const std::filesystem::path& out_dir,
                           bool allow_same_media) {
  struct stat img_st {};
  if (::stat(image.c_str(), &img_st) != 0 || !S_ISBLK(img_st.st_mode)) return;
  std::filesystem::path probe = out_dir;
  while (!probe.empty() && !std::filesystem::exists(probe)) probe = probe.parent_path();
  if (probe.empty()) probe = ".";
  struct stat out_st {};
  if (::stat(probe.c_str(), &out_st) != 0) return;
  if (out_st.st_dev == img_st.st_rdev && !allow_same_media) {
    throw Error("output directory resides on the media under analysis; pass --same-media to override");
  }
}

std::string output_file_name(std::string_view entry_id, std::string_view name) {
  std::string out;
  for (char ch : entry_id) out.push_back(std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_');
  out.push_back('_');
  for (char ch : name) {
    const auto u = static_cast<unsigned char>(ch);
    out.push_back((std::isalnum(u) || ch == '.' || ch == '-' || ch == '_' || u >= 0x80) ? ch : '_');
  }
  return out;
}

}  // namespace remnant
