#include "remnant/forge.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <map>

namespace remnant::forge {

namespace {

constexpr std::uint64_t kFiletime2020 = 132223104000000000ULL;  // 2020-01-01T00:00:00Z
constexpr std::uint16_t kDosDate2020 = ((2020 - 1980) << 9) | (1 << 5) | 1;
constexpr std::uint16_t kDosTimeNoon = 12 << 11;
constexpr std::uint64_t kNoCluster = ~std::uint64_t{0};
constexpr std::uint64_t kRootRecord = 5;
constexpr std::uint32_t kNtfsBootBytes = 8192;
constexpr std::uint64_t kResidentLimit = 600;
constexpr std::uint8_t kAttrLabel = 0x08;

std::uint64_t align8(std::uint64_t v) { return (v + 7) & ~std::uint64_t{7}; }

void put16(Bytes& b, std::size_t off, std::uint16_t v) { store_le<std::uint16_t>(b, off, v); }
void put32(Bytes& b, std::size_t off, std::uint32_t v) { store_le<std::uint32_t>(b, off, v); }
void put64(Bytes& b, std::size_t off, std::uint64_t v) { store_le<std::uint64_t>(b, off, v); }

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::u16string utf8_to_utf16(std::string_view s) {
  std::u16string out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::uint32_t cp = c;
    std::size_t n = 1;
    if (c >= 0xF0 && i + 3 < s.size()) {
      cp = ((c & 0x07u) << 18) | ((s[i + 1] & 0x3Fu) << 12) | ((s[i + 2] & 0x3Fu) << 6) | (s[i + 3] & 0x3Fu);
      n = 4;
    } else if (c >= 0xE0 && i + 2 < s.size()) {
      cp = ((c & 0x0Fu) << 12) | ((s[i + 1] & 0x3Fu) << 6) | (s[i + 2] & 0x3Fu);
      n = 3;
    } else if (c >= 0xC0 && i + 1 < s.size()) {
      cp = ((c & 0x1Fu) << 6) | (s[i + 1] & 0x3Fu);
      n = 2;
    }
    i += n;
    if (cp >= 0x10000) {
      cp -= 0x10000;
      out.push_back(static_cast<char16_t>(0xD800 + (cp >> 10)));
      out.push_back(static_cast<char16_t>(0xDC00 + (cp & 0x3FF)));
    } else {
      out.push_back(static_cast<char16_t>(cp));
    }
  }
  return out;
}

Bytes class_magic(FileClass cls) {
  switch (cls) {
    case FileClass::Document: return {'%', 'P', 'D', 'F', '-', '1', '.', '4', '\n'};
    case FileClass::Image: return {0xFF, 0xD8, 0xFF, 0xE0, 0x00, 0x10, 'J', 'F', 'I', 'F', 0x00};
    case FileClass::Audio: return {'I', 'D', '3', 0x03, 0x00, 0x00};
    case FileClass::Video: return {0x00, 0x00, 0x00, 0x18, 'f', 't', 'y', 'p', 'm', 'p', '4', '2'};
    case FileClass::Compressed: return {'P', 'K', 0x03, 0x04, 0x14, 0x00};
    case FileClass::Executable: return {'M', 'Z', 0x90, 0x00, 0x03, 0x00};
    case FileClass::Unknown: break;
  }
  return {};
}

// 8.3 name that can be stored without long-name slots.
bool valid_short_name(std::string_view name) {
  if (name.empty() || name.front() == '.') return false;
  const auto dot = name.find('.');
  const auto base = name.substr(0, dot);
  const auto ext = dot == std::string_view::npos ? std::string_view{} : name.substr(dot + 1);
  if (base.empty() || base.size() > 8 || ext.size() > 3 || ext.find('.') != std::string_view::npos) return false;
  auto ok = [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || std::string_view("_-~!#$%&'()@^{}").find(c) != std::string_view::npos;
  };
  return std::all_of(base.begin(), base.end(), ok) && std::all_of(ext.begin(), ext.end(), ok);
}

std::array<std::uint8_t, 11> pack_short(std::string_view name) {
  std::array<std::uint8_t, 11> raw;
  raw.fill(' ');
  const auto dot = name.find('.');
  const auto base = name.substr(0, dot);
  for (std::size_t i = 0; i < base.size() && i < 8; ++i) raw[i] = static_cast<std::uint8_t>(base[i]);
  if (dot != std::string_view::npos) {
    const auto ext = name.substr(dot + 1);
    for (std::size_t i = 0; i < ext.size() && i < 3; ++i) raw[8 + i] = static_cast<std::uint8_t>(ext[i]);
  }
  return raw;
}

std::uint8_t short_checksum(const std::array<std::uint8_t, 11>& raw) {
  std::uint8_t sum = 0;
  for (auto b : raw) sum = static_cast<std::uint8_t>(((sum & 1) << 7) + (sum >> 1) + b);
  return sum;
}

std::uint32_t fat_bits(FsKind k) { return k == FsKind::Fat12 ? 12 : k == FsKind::Fat16 ? 16 : 32; }

FsKind kind_for_count(std::uint64_t clusters) {
  if (clusters < 4085) return FsKind::Fat12;
  if (clusters < 65525) return FsKind::Fat16;
  return FsKind::Fat32;
}

// Attribute builders. Each returns the attribute bytes, 8-byte aligned.
Bytes resident_attr(std::uint32_t type, std::uint16_t id, ByteView value, bool indexed = false) {
  Bytes a(align8(0x18 + value.size()), 0);
  put32(a, 0x00, type);
  put32(a, 0x04, static_cast<std::uint32_t>(a.size()));
  put16(a, 0x0A, 0x18);
  put16(a, 0x0E, id);
  put32(a, 0x10, static_cast<std::uint32_t>(value.size()));
  put16(a, 0x14, 0x18);
  a[0x16] = indexed ? 1 : 0;
  std::copy(value.begin(), value.end(), a.begin() + 0x18);
  return a;
}

Bytes nonresident_attr(std::uint32_t type, std::uint16_t id, const ntfs::RunList& runs, std::uint64_t real_size,
                       std::uint32_t cluster_size) {
  const Bytes rl = encode_data_runs(runs);
  const std::uint64_t clusters = runs.total_clusters();
  Bytes a(align8(0x40 + rl.size()), 0);
  put32(a, 0x00, type);
  put32(a, 0x04, static_cast<std::uint32_t>(a.size()));
  a[0x08] = 1;
  put16(a, 0x0A, 0x40);
  put16(a, 0x0E, id);
  put64(a, 0x10, 0);
  put64(a, 0x18, clusters == 0 ? 0 : clusters - 1);
  put16(a, 0x20, 0x40);
  put64(a, 0x28, clusters * cluster_size);
  put64(a, 0x30, real_size);
  put64(a, 0x38, real_size);
  std::copy(rl.begin(), rl.end(), a.begin() + 0x40);
  return a;
}

}  // namespace

FsKind fs_kind_from_string(std::string_view s) {
  const auto u = upper(s);
  if (u == "FAT12") return FsKind::Fat12;
  if (u == "FAT16") return FsKind::Fat16;
  if (u == "FAT32") return FsKind::Fat32;
  if (u == "NTFS") return FsKind::Ntfs;
  throw ForgeError("unknown filesystem '" + std::string(s) + "'");
}

std::string_view to_string(FileState s) {
  switch (s) {
    case FileState::Live: return "live";
    case FileState::Deleted: return "deleted";
    case FileState::Formatted: return "formatted";
    case FileState::Sanitized: return "sanitized";
  }
  return "?";
}

Bytes generate_content(FileClass cls, std::uint64_t size, std::uint64_t seed) {
  Bytes out(static_cast<std::size_t>(size));
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(cls) + 1);
  for (std::size_t i = 0; i < out.size(); i += 8) {
    const std::uint64_t v = rng();
    for (std::size_t k = 0; k < 8 && i + k < out.size(); ++k) out[i + k] = static_cast<std::uint8_t>(v >> (8 * k));
  }
  const Bytes magic = class_magic(cls);
  std::copy_n(magic.begin(), std::min(magic.size(), out.size()), out.begin());
  return out;
}

Bytes expected_content(const FileTruth& f, std::uint32_t cluster_size) {
  Bytes out = generate_content(f.file_class, f.size, f.seed);
  if (f.sparse) {
    const std::uint64_t lo = std::min<std::uint64_t>(f.sparse->first * cluster_size, out.size());
    const std::uint64_t hi = std::min<std::uint64_t>((f.sparse->first + f.sparse->second) * cluster_size, out.size());
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(lo), out.begin() + static_cast<std::ptrdiff_t>(hi), 0);
  }
  return out;
}

Bytes encode_data_runs(const ntfs::RunList& runs) {
  Bytes out;
  std::int64_t prev = 0;
  auto width_unsigned = [](std::uint64_t v) {
    unsigned n = 1;
    while (n < 8 && (v >> (8 * n)) != 0) ++n;
    return n;
  };
  auto width_signed = [](std::int64_t v) {
    unsigned n = 1;
    while (n < 8) {
      const std::int64_t lo = -(std::int64_t{1} << (8 * n - 1));
      const std::int64_t hi = (std::int64_t{1} << (8 * n - 1)) - 1;
      if (v >= lo && v <= hi) break;
      ++n;
    }
    return n;
  };
  for (const auto& run : runs.runs) {
    if (run.length == 0) throw ForgeError("zero-length run");
    const unsigned lw = width_unsigned(run.length);
    unsigned ow = 0;
    std::int64_t delta = 0;
    if (!run.sparse()) {
      delta = static_cast<std::int64_t>(*run.lcn) - prev;
      ow = width_signed(delta);
      prev = static_cast<std::int64_t>(*run.lcn);
    }
    out.push_back(static_cast<std::uint8_t>((ow << 4) | lw));
    for (unsigned i = 0; i < lw; ++i) out.push_back(static_cast<std::uint8_t>(run.length >> (8 * i)));
    const auto bits = static_cast<std::uint64_t>(delta);
    for (unsigned i = 0; i < ow; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  out.push_back(0);
  return out;
}

const FileTruth* GroundTruth::find(std::string_view name) const {
  for (const auto& f : files) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Shared plumbing

ForgedImage ForgedImage::build(const CorpusSpec& spec) {
  const auto& g = spec.geometry;
  if (!is_power_of_two(g.bytes_per_sector) || g.bytes_per_sector < 512 || g.bytes_per_sector > 4096 ||
      !is_power_of_two(g.sectors_per_cluster) || g.sectors_per_cluster > 128) {
    throw ForgeError("unsupported sector or cluster size");
  }
  if (g.volume_bytes % g.bytes_per_sector != 0 || g.volume_bytes < 64 * 1024) {
    throw ForgeError("volume size must be a sector multiple of at least 64 KiB");
  }
  ForgedImage img;
  img.kind_ = spec.kind;
  img.geo_ = g;
  img.bps_ = g.bytes_per_sector;
  img.spc_ = g.sectors_per_cluster;
  img.image_.assign(static_cast<std::size_t>(g.volume_bytes), 0);
  if (spec.kind == FsKind::Ntfs) {
    img.build_ntfs(spec);
  } else {
    img.build_fat(spec);
  }
  return img;
}

std::uint64_t ForgedImage::cluster_offset(std::uint64_t cluster) const {
  if (kind_ == FsKind::Ntfs) return cluster * cluster_size();
  return (static_cast<std::uint64_t>(first_data_sector_) + (cluster - 2) * spc_) * bps_;
}

std::vector<std::uint64_t> ForgedImage::take_run(std::uint64_t count, std::uint64_t from) {
  std::uint64_t run = 0;
  for (std::uint64_t c = from; c < used_.size(); ++c) {
    run = used_[c] ? 0 : run + 1;
    if (run == count) {
      std::vector<std::uint64_t> out;
      for (std::uint64_t k = c + 1 - count; k <= c; ++k) {
        used_[k] = true;
        out.push_back(k);
      }
      return out;
    }
  }
  throw ForgeError("volume full");
}

std::vector<std::uint64_t> ForgedImage::allocate(std::uint64_t count, const FileSpec& spec) {
  if (count == 0) return {};
  if (spec.at_cluster) {
    // Placement at a fixed cluster takes whatever is free from there on.
    std::vector<std::uint64_t> out;
    for (std::uint64_t c = *spec.at_cluster; c < used_.size() && out.size() < count; ++c) {
      if (!used_[c]) out.push_back(c);
    }
    if (out.size() < count) throw ForgeError("volume full");
    for (auto c : out) used_[c] = true;
    return out;
  }
  if (spec.fragment && count >= 2) {
    const std::uint64_t h1 = count / 2;
    const std::uint64_t h2 = count - h1;
    if (kind_ == FsKind::Ntfs) {
      // Second half below the first so the run list carries a negative delta.
      auto second = take_run(h2, 0);
      auto first = take_run(h1, second.back() + 1 + geo_.fragment_gap);
      first.insert(first.end(), second.begin(), second.end());
      return first;
    }
    auto first = take_run(h1, 0);
    auto second = take_run(h2, first.back() + 1 + geo_.fragment_gap);
    first.insert(first.end(), second.begin(), second.end());
    return first;
  }
  return take_run(count, 0);
}

void ForgedImage::write_content(FileTruth& truth, std::span<const std::uint64_t> clusters) {
  const Bytes content = expected_content(truth, cluster_size());
  const std::uint64_t cs = cluster_size();
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    if (clusters[k] == kNoCluster) continue;
    const std::uint64_t lo = k * cs;
    if (lo >= content.size()) break;
    const std::uint64_t n = std::min<std::uint64_t>(cs, content.size() - lo);
    std::copy_n(content.begin() + static_cast<std::ptrdiff_t>(lo), n,
                image_.begin() + static_cast<std::ptrdiff_t>(cluster_offset(clusters[k])));
  }
  truth.sha256 = sha256_hex(content);
}

FileTruth& ForgedImage::find_live(std::string_view name) {
  for (auto& f : files_) {
    if (f.state != FileState::Live) continue;
    if (f.name == name || (!f.directory.empty() && f.directory + "/" + f.name == name)) return f;
  }
  throw ForgeError("unknown file '" + std::string(name) + "'");
}

GroundTruth ForgedImage::truth() const {
  GroundTruth t;
  t.image_sha256 = sha256_hex(image_);
  t.kind = kind_;
  t.volume_bytes = image_.size();
  t.bytes_per_sector = bps_;
  t.cluster_size = cluster_size();
  if (kind_ == FsKind::Ntfs) {
    t.mft_record_size = geo_.mft_record_size;
    t.mft_lcn = mft_lcn_;
  }
  t.files = files_;
  t.mutations = mutations_;
  return t;
}

void ForgedImage::save(const std::filesystem::path& image, const std::filesystem::path& sidecar) const {
  {
    std::ofstream out(image, std::ios::binary | std::ios::trunc);
    if (!out) throw ForgeError("cannot write " + image.string());
    out.write(reinterpret_cast<const char*>(image_.data()), static_cast<std::streamsize>(image_.size()));
    if (!out) throw ForgeError("short write to " + image.string());
  }
  std::ofstream out(sidecar, std::ios::trunc);
  if (!out) throw ForgeError("cannot write " + sidecar.string());
  out << to_json(truth()).dump(2) << '\n';
}

void ForgedImage::delete_metadata_only(std::string_view name) {
  std::vector<FileTruth*> targets;
  if (name == "*") {
    for (auto& f : files_) {
      if (f.state == FileState::Live) targets.push_back(&f);
    }
  } else {
    targets.push_back(&find_live(name));
  }
  for (auto* f : targets) {
    if (kind_ == FsKind::Ntfs) {
      ntfs_delete(*f);
    } else {
      fat_delete(*f);
    }
    f->state = FileState::Deleted;
  }
  if (kind_ == FsKind::Ntfs) ntfs_write_bitmap();
  mutations_.push_back("delete " + std::string(name));
}

void ForgedImage::quick_format() {
  if (kind_ == FsKind::Ntfs) {
    ntfs_quick_format();
  } else {
    fat_quick_format();
  }
  for (auto& f : files_) {
    if (f.state == FileState::Live || f.state == FileState::Deleted) f.state = FileState::Formatted;
  }
  mutations_.emplace_back("quick_format");
}

void ForgedImage::full_overwrite() {
  std::uint64_t from = 0;
  if (kind_ != FsKind::Ntfs) {
    // Root region (FAT12/16) and the whole cluster heap.
    from = static_cast<std::uint64_t>(first_data_sector_ - root_dir_sectors_) * bps_;
  }
  std::fill(image_.begin() + static_cast<std::ptrdiff_t>(from), image_.end(), 0);
  if (kind_ == FsKind::Ntfs) {
    ntfs_quick_format();
  } else {
    fat_quick_format();
  }
  for (auto& f : files_) f.state = FileState::Sanitized;
  mutations_.emplace_back("full_overwrite");
}

const FileTruth& ForgedImage::write_file(const FileSpec& spec) {
  if (kind_ == FsKind::Ntfs) {
    ntfs_add_file(spec);
    ntfs_write_bitmap();
  } else {
    fat_add_file(spec);
  }
  mutations_.push_back("write " + spec.name);
  return files_.back();
}

void ForgedImage::corrupt_fixup(std::uint64_t mft_index) {
  if (kind_ != FsKind::Ntfs) throw ForgeError("fixups exist only on NTFS");
  const std::uint64_t off = ntfs_record_offset(mft_index);
  image_[off + 510] ^= 0xFF;
  mutations_.push_back("corrupt_fixup " + std::to_string(mft_index));
}

// ---------------------------------------------------------------------------
// FAT

void ForgedImage::build_fat(const CorpusSpec& spec) {
  const std::uint64_t total = image_.size() / bps_;
  if (total > 0xFFFFFFFFULL) throw ForgeError("volume too large for FAT");
  reserved_ = kind_ == FsKind::Fat32 ? 32 : 1;
  const std::uint32_t root_entries = kind_ == FsKind::Fat32 ? 0 : geo_.root_entries;
  root_dir_sectors_ = static_cast<std::uint32_t>(ceil_div(std::uint64_t{root_entries} * 32, bps_));
  const std::uint32_t bits = fat_bits(kind_);

  std::uint64_t fat_sectors = 1;
  std::uint64_t clusters = 0;
  for (int guard = 0; guard < 64; ++guard) {
    const std::uint64_t meta = reserved_ + 2 * fat_sectors + root_dir_sectors_;
    if (meta >= total) throw ForgeError("volume too small for its metadata");
    clusters = (total - meta) / spc_;
    const std::uint64_t need = ceil_div(ceil_div((clusters + 2) * bits, 8), bps_);
    if (need <= fat_sectors) break;
    fat_sectors = need;
  }
  if (kind_for_count(clusters) != kind_) {
    throw ForgeError("geometry yields " + std::string(to_string(kind_for_count(clusters))) + ", not " +
                     std::string(to_string(kind_)));
  }
  fat_sectors_ = static_cast<std::uint32_t>(fat_sectors);
  cluster_count_ = static_cast<std::uint32_t>(clusters);
  first_data_sector_ = reserved_ + 2 * fat_sectors_ + root_dir_sectors_;

  used_.assign(cluster_count_ + 2, false);
  used_[0] = used_[1] = true;
  fat_write_boot();
  fat_reset_tables();
  dirs_.push_back({"", {}, 0});
  if (kind_ == FsKind::Fat32) {
    used_[2] = true;
    dirs_[0].clusters.push_back(2);
    fat_set(2, fat_eoc());
  }
  fat_add_entry(&dirs_[0], geo_.label, kAttrLabel, 0, 0, nullptr);

  // Subdirectories first so their clusters sit ahead of the file data.
  std::vector<std::string> order;
  std::map<std::string, std::size_t> slots;
  for (const auto& f : spec.files) {
    if (f.directory.empty()) continue;
    if (!slots.contains(f.directory)) order.push_back(f.directory);
    const bool lfn = !valid_short_name(f.name);
    slots[f.directory] += 1 + (lfn ? ceil_div(utf8_to_utf16(f.name).size(), 13) : 0);
  }
  for (const auto& name : order) {
    const std::uint64_t need = 2 + slots[name] + 16;
    const std::uint64_t count = ceil_div(need * 32, cluster_size());
    Directory d;
    d.name = name;
    d.clusters = take_run(count, 0);
    fat_link(d.clusters);
    dirs_.push_back(d);
    const auto& stored = dirs_.back();
    fat_add_entry(&dirs_[0], name, 0x10, static_cast<std::uint32_t>(stored.clusters.front()), 0, nullptr);
    fat_add_entry(&stored, ".", 0x10, static_cast<std::uint32_t>(stored.clusters.front()), 0, nullptr);
    fat_add_entry(&stored, "..", 0x10, 0, 0, nullptr);
  }
  for (const auto& f : spec.files) fat_add_file(f);
}

std::uint32_t ForgedImage::fat_eoc() const {
  switch (kind_) {
    case FsKind::Fat12: return 0xFFF;
    case FsKind::Fat16: return 0xFFFF;
    default: return 0x0FFFFFFF;
  }
}

void ForgedImage::fat_write_boot() {
  Bytes boot(bps_, 0);
  const bool fat32 = kind_ == FsKind::Fat32;
  boot[0] = 0xEB;
  boot[1] = fat32 ? 0x58 : 0x3C;
  boot[2] = 0x90;
  std::copy_n("REMNANT ", 8, boot.begin() + 3);
  put16(boot, 0x0B, static_cast<std::uint16_t>(bps_));
  boot[0x0D] = static_cast<std::uint8_t>(spc_);
  put16(boot, 0x0E, static_cast<std::uint16_t>(reserved_));
  boot[0x10] = 2;
  put16(boot, 0x11, static_cast<std::uint16_t>(fat32 ? 0 : geo_.root_entries));
  const std::uint64_t total = image_.size() / bps_;
  if (!fat32 && total < 0x10000) {
    put16(boot, 0x13, static_cast<std::uint16_t>(total));
  } else {
    put32(boot, 0x20, static_cast<std::uint32_t>(total));
  }
  boot[0x15] = 0xF8;
  put16(boot, 0x18, 63);
  put16(boot, 0x1A, 255);
  // Labels are 11 raw characters, not split into name and extension.
  std::array<std::uint8_t, 11> label;
  label.fill(' ');
  const auto lab = upper(geo_.label);
  std::copy_n(lab.begin(), std::min<std::size_t>(11, lab.size()), label.begin());
  if (fat32) {
    put32(boot, 0x24, fat_sectors_);
    put32(boot, 0x2C, 2);
    put16(boot, 0x30, 1);
    put16(boot, 0x32, 6);
    boot[0x40] = 0x80;
    boot[0x42] = 0x29;
    put32(boot, 0x43, 0x52454D4E);
    std::copy(label.begin(), label.end(), boot.begin() + 0x47);
    std::copy_n("FAT32   ", 8, boot.begin() + 0x52);
  } else {
    put16(boot, 0x16, static_cast<std::uint16_t>(fat_sectors_));
    boot[0x24] = 0x80;
    boot[0x26] = 0x29;
    put32(boot, 0x27, 0x52454D4E);
    std::copy(label.begin(), label.end(), boot.begin() + 0x2B);
    std::copy_n(kind_ == FsKind::Fat12 ? "FAT12   " : "FAT16   ", 8, boot.begin() + 0x36);
  }
  boot[510] = 0x55;
  boot[511] = 0xAA;
  std::copy(boot.begin(), boot.end(), image_.begin());
  if (fat32) {
    std::copy(boot.begin(), boot.end(), image_.begin() + 6 * bps_);
    Bytes info(bps_, 0);
    put32(info, 0, 0x41615252);
    put32(info, 484, 0x61417272);
    put32(info, 488, 0xFFFFFFFF);
    put32(info, 492, 0xFFFFFFFF);
    put32(info, 508, 0xAA550000);
    std::copy(info.begin(), info.end(), image_.begin() + bps_);
  }
}

void ForgedImage::fat_reset_tables() {
  const std::uint64_t lo = static_cast<std::uint64_t>(reserved_) * bps_;
  const std::uint64_t hi = lo + 2ull * fat_sectors_ * bps_;
  std::fill(image_.begin() + static_cast<std::ptrdiff_t>(lo), image_.begin() + static_cast<std::ptrdiff_t>(hi), 0);
  fat_set(0, fat_eoc() & ~0x7u);
  fat_set(1, fat_eoc());
}

void ForgedImage::fat_set(std::uint64_t cluster, std::uint32_t value) {
  for (std::uint32_t copy = 0; copy < 2; ++copy) {
    const std::uint64_t base = (static_cast<std::uint64_t>(reserved_) + copy * fat_sectors_) * bps_;
    switch (kind_) {
      case FsKind::Fat12: {
        const std::uint64_t off = base + cluster * 3 / 2;
        if (cluster % 2 == 0) {
          image_[off] = static_cast<std::uint8_t>(value);
          image_[off + 1] = static_cast<std::uint8_t>((image_[off + 1] & 0xF0) | ((value >> 8) & 0x0F));
        } else {
          image_[off] = static_cast<std::uint8_t>((image_[off] & 0x0F) | ((value << 4) & 0xF0));
          image_[off + 1] = static_cast<std::uint8_t>(value >> 4);
        }
        break;
      }
      case FsKind::Fat16: put16(image_, base + cluster * 2, static_cast<std::uint16_t>(value)); break;
      default: put32(image_, base + cluster * 4, value & 0x0FFFFFFF); break;
    }
  }
}

void ForgedImage::fat_link(std::span<const std::uint64_t> chain) {
  for (std::size_t i = 0; i < chain.size(); ++i) {
    fat_set(chain[i], i + 1 < chain.size() ? static_cast<std::uint32_t>(chain[i + 1]) : fat_eoc());
  }
}

ForgedImage::Directory& ForgedImage::fat_directory(const std::string& name) {
  for (auto& d : dirs_) {
    if (d.name == name) return d;
  }
  throw ForgeError("unknown directory '" + name + "'");
}

std::uint64_t ForgedImage::fat_free_slot(const Directory* dir, std::size_t slots) {
  const bool fixed_root = dir->name.empty() && kind_ != FsKind::Fat32;
  const std::uint64_t capacity =
      fixed_root ? geo_.root_entries : dir->clusters.size() * cluster_size() / 32;
  auto offset = [&](std::uint64_t i) {
    if (fixed_root) return static_cast<std::uint64_t>(first_data_sector_ - root_dir_sectors_) * bps_ + i * 32;
    const std::uint64_t per = cluster_size() / 32;
    return cluster_offset(dir->clusters[i / per]) + (i % per) * 32;
  };
  std::uint64_t first = 0;
  while (first < capacity && image_[offset(first)] != 0) ++first;
  if (first + slots > capacity) throw ForgeError("directory full");
  return offset(first);
}

void ForgedImage::fat_add_entry(const Directory* dir, const std::string& name, std::uint8_t attr,
                                std::uint32_t first_cluster, std::uint32_t size, FileTruth* truth) {
  const bool label = attr == kAttrLabel;
  const bool dots = name == "." || name == "..";
  std::array<std::uint8_t, 11> raw;
  std::vector<Bytes> lfn;
  if (label) {
    raw.fill(' ');
    const auto lab = upper(name);
    std::copy_n(lab.begin(), std::min<std::size_t>(11, lab.size()), raw.begin());
  } else if (dots) {
    raw.fill(' ');
    raw[0] = '.';
    if (name.size() == 2) raw[1] = '.';
  } else if (valid_short_name(name)) {
    raw = pack_short(name);
  } else {
    // Long name: NAME~N.EXT alias plus LFN slots in reverse order.
    std::string base, ext;
    const auto dot = name.rfind('.');
    for (char c : upper(name.substr(0, dot))) {
      if (std::isalnum(static_cast<unsigned char>(c)) && base.size() < 6) base.push_back(c);
    }
    if (dot != std::string::npos) {
      for (char c : upper(name.substr(dot + 1))) {
        if (std::isalnum(static_cast<unsigned char>(c)) && ext.size() < 3) ext.push_back(c);
      }
    }
    if (base.empty()) base = "FILE";
    for (int n = 1;; ++n) {
      const std::string alias = base + "~" + std::to_string(n) + (ext.empty() ? "" : "." + ext);
      raw = pack_short(alias);
      bool clash = false;
      for (const auto& [off, unused] : lfn_slots_) {
        (void)unused;
        if (std::equal(raw.begin(), raw.end(), image_.begin() + static_cast<std::ptrdiff_t>(off))) clash = true;
      }
      if (!clash || n > 999) break;
    }
    const std::u16string u = utf8_to_utf16(name);
    const std::size_t count = ceil_div(u.size(), 13);
    const std::uint8_t sum = short_checksum(raw);
    static constexpr std::array<std::size_t, 13> pos = {1, 3, 5, 7, 9, 14, 16, 18, 20, 22, 24, 28, 30};
    for (std::size_t k = count; k >= 1; --k) {
      Bytes slot(32, 0);
      slot[0] = static_cast<std::uint8_t>(k | (k == count ? 0x40 : 0));
      slot[11] = 0x0F;
      slot[13] = sum;
      for (std::size_t j = 0; j < 13; ++j) {
        const std::size_t idx = (k - 1) * 13 + j;
        std::uint16_t ch = 0xFFFF;
        if (idx < u.size()) {
          ch = static_cast<std::uint16_t>(u[idx]);
        } else if (idx == u.size()) {
          ch = 0;
        }
        put16(slot, pos[j], ch);
      }
      lfn.push_back(std::move(slot));
    }
  }

  const std::uint64_t base_off = fat_free_slot(dir, lfn.size() + 1);
  // Slots are consecutive within one directory cluster run: directories are contiguous.
  std::vector<std::uint64_t> lfn_offsets;
  for (std::size_t i = 0; i < lfn.size(); ++i) {
    const std::uint64_t off = base_off + i * 32;
    std::copy(lfn[i].begin(), lfn[i].end(), image_.begin() + static_cast<std::ptrdiff_t>(off));
    lfn_offsets.push_back(off);
  }
  const std::uint64_t off = base_off + lfn.size() * 32;
  Bytes e(32, 0);
  std::copy(raw.begin(), raw.end(), e.begin());
  e[11] = attr;
  if (!label) {
    put16(e, 0x0E, kDosTimeNoon);
    put16(e, 0x10, kDosDate2020);
    put16(e, 0x12, kDosDate2020);
    put16(e, 0x16, kDosTimeNoon);
    put16(e, 0x18, kDosDate2020);
  }
  if (kind_ == FsKind::Fat32) put16(e, 0x14, static_cast<std::uint16_t>(first_cluster >> 16));
  put16(e, 0x1A, static_cast<std::uint16_t>(first_cluster));
  put32(e, 0x1C, size);
  std::copy(e.begin(), e.end(), image_.begin() + static_cast<std::ptrdiff_t>(off));
  lfn_slots_[off] = std::move(lfn_offsets);
  if (truth != nullptr) truth->entry_offset = off;
}

void ForgedImage::fat_add_file(const FileSpec& spec) {
  if (spec.size > 0xFFFFFFFFULL) throw ForgeError("file too large for FAT");
  if (spec.sparse) throw ForgeError("sparse files exist only on NTFS");
  for (const auto& f : files_) {
    if (f.state == FileState::Live && f.directory == spec.directory && upper(f.name) == upper(spec.name)) {
      throw ForgeError("duplicate name '" + spec.name + "'");
    }
  }
  const Directory* dir = &fat_directory(spec.directory);
  FileTruth t;
  t.name = spec.name;
  t.directory = spec.directory;
  t.file_class = spec.file_class;
  t.size = spec.size;
  t.seed = spec.seed;
  const auto clusters = allocate(ceil_div(spec.size, cluster_size()), spec);
  fat_link(clusters);
  write_content(t, clusters);
  t.extents = coalesce(clusters);
  fat_add_entry(dir, spec.name, 0x20, clusters.empty() ? 0 : static_cast<std::uint32_t>(clusters.front()),
                static_cast<std::uint32_t>(spec.size), &t);
  files_.push_back(std::move(t));
}

void ForgedImage::fat_delete(FileTruth& f) {
  image_[f.entry_offset] = 0xE5;
  if (auto it = lfn_slots_.find(f.entry_offset); it != lfn_slots_.end()) {
    for (auto off : it->second) image_[off] = 0xE5;
  }
  for (const auto& ext : f.extents) {
    for (std::uint64_t c = ext.first; c < ext.first + ext.count; ++c) {
      fat_set(c, 0);
      used_[c] = false;
    }
  }
}

void ForgedImage::fat_quick_format() {
  fat_write_boot();
  fat_reset_tables();
  std::fill(used_.begin(), used_.end(), false);
  used_[0] = used_[1] = true;
  dirs_.clear();
  lfn_slots_.clear();
  dirs_.push_back({"", {}, 0});
  if (kind_ == FsKind::Fat32) {
    const std::uint64_t off = cluster_offset(2);
    std::fill_n(image_.begin() + static_cast<std::ptrdiff_t>(off), cluster_size(), 0);
    used_[2] = true;
    dirs_[0].clusters.push_back(2);
    fat_set(2, fat_eoc());
  } else {
    const std::uint64_t off = static_cast<std::uint64_t>(first_data_sector_ - root_dir_sectors_) * bps_;
    std::fill_n(image_.begin() + static_cast<std::ptrdiff_t>(off), root_dir_sectors_ * bps_, 0);
  }
  fat_add_entry(&dirs_[0], geo_.label, kAttrLabel, 0, 0, nullptr);
}

// ---------------------------------------------------------------------------
// NTFS

void ForgedImage::build_ntfs(const CorpusSpec& spec) {
  const std::uint32_t rs = geo_.mft_record_size;
  const std::uint64_t cs = cluster_size();
  if (!is_power_of_two(rs) || rs < 1024 || rs > 4096) throw ForgeError("unsupported MFT record size");
  total_clusters_ = (image_.size() / bps_ - 1) / spc_;
  used_.assign(total_clusters_, false);

  const std::uint64_t boot_clusters = ceil_div(kNtfsBootBytes, cs);
  for (std::uint64_t c = 0; c < boot_clusters; ++c) used_[c] = true;
  mirror_lcn_ = boot_clusters;
  const std::uint64_t mirror_clusters = ceil_div(4ull * rs, cs);
  for (std::uint64_t c = 0; c < mirror_clusters; ++c) used_[mirror_lcn_ + c] = true;
  mft_lcn_ = mirror_lcn_ + mirror_clusters;

  const std::uint64_t wanted = 16 + spec.files.size() + geo_.spare_records;
  const std::uint64_t mft_clusters = ceil_div(wanted * rs, cs);
  mft_records_ = static_cast<std::uint32_t>(mft_clusters * cs / rs);
  std::uint64_t first_run = mft_clusters;
  if (geo_.mft_fragmented) {
    first_run = std::max(ceil_div(16ull * rs, cs), mft_clusters / 2);
    if (first_run >= mft_clusters) first_run = mft_clusters;
  }
  const auto run1 = take_run(first_run, mft_lcn_);
  if (run1.front() != mft_lcn_) throw ForgeError("MFT placement failed");
  bitmap_lcn_ = run1.back() + 1;
  bitmap_clusters_ = ceil_div(align8(ceil_div(total_clusters_, 8)), cs);
  take_run(bitmap_clusters_, bitmap_lcn_);
  mft_runs_.runs = {{first_run, mft_lcn_}};
  if (first_run < mft_clusters) {
    const auto run2 = take_run(mft_clusters - first_run, bitmap_lcn_ + bitmap_clusters_ + geo_.fragment_gap);
    mft_runs_.runs.push_back({run2.size(), run2.front()});
  }

  ntfs_write_boot();
  ntfs_write_system(mft_records_);
  next_record_ = 16;
  for (const auto& f : spec.files) ntfs_add_file(f);
  ntfs_write_bitmap();
}

void ForgedImage::ntfs_write_boot() {
  Bytes boot(bps_, 0);
  boot[0] = 0xEB;
  boot[1] = 0x52;
  boot[2] = 0x90;
  std::copy_n("NTFS    ", 8, boot.begin() + 3);
  put16(boot, 0x0B, static_cast<std::uint16_t>(bps_));
  boot[0x0D] = static_cast<std::uint8_t>(spc_);
  boot[0x15] = 0xF8;
  put16(boot, 0x18, 63);
  put16(boot, 0x1A, 255);
  boot[0x24] = 0x80;
  boot[0x26] = 0x80;
  const std::uint64_t total_sectors = image_.size() / bps_ - 1;
  put64(boot, 0x28, total_sectors);
  put64(boot, 0x30, mft_lcn_);
  put64(boot, 0x38, mirror_lcn_);
  auto per = [&](std::uint32_t bytes) -> std::uint8_t {
    if (bytes >= cluster_size()) return static_cast<std::uint8_t>(bytes / cluster_size());
    int shift = 0;
    while ((1u << shift) < bytes) ++shift;
    return static_cast<std::uint8_t>(-shift);
  };
  boot[0x40] = per(geo_.mft_record_size);
  boot[0x44] = per(4096);
  put64(boot, 0x48, 0x52454D4E414E5421ULL);
  boot[510] = 0x55;
  boot[511] = 0xAA;
  std::copy(boot.begin(), boot.end(), image_.begin());
  std::copy(boot.begin(), boot.end(), image_.begin() + static_cast<std::ptrdiff_t>(total_sectors * bps_));
}

Bytes ForgedImage::ntfs_record(std::uint64_t index, std::uint16_t flags, const std::string& name,
                               std::uint64_t parent, std::variant<Bytes, ntfs::RunList> data,
                               std::uint64_t real_size, bool legacy_header) const {
  const std::uint32_t rs = geo_.mft_record_size;
  Bytes r(rs, 0);
  std::copy_n("FILE", 4, r.begin());
  const std::uint16_t usa_off = legacy_header ? 0x2A : 0x30;
  const std::uint16_t usa_count = static_cast<std::uint16_t>(rs / 512 + 1);
  const auto first_attr = static_cast<std::uint16_t>(align8(usa_off + 2u * usa_count));
  put16(r, 0x04, usa_off);
  put16(r, 0x06, usa_count);
  put16(r, 0x10, 1);
  put16(r, 0x12, 1);
  put16(r, 0x14, first_attr);
  put16(r, 0x16, flags);
  put32(r, 0x1C, rs);
  if (!legacy_header) put32(r, 0x2C, static_cast<std::uint32_t>(index));

  std::uint16_t id = 0;
  std::size_t off = first_attr;
  auto place = [&](const Bytes& a) {
    if (off + a.size() + 8 > rs - 0) throw ForgeError("record overflow for '" + name + "'");
    std::copy(a.begin(), a.end(), r.begin() + static_cast<std::ptrdiff_t>(off));
    off += a.size();
  };

  Bytes si(0x48, 0);
  for (int k = 0; k < 4; ++k) put64(si, 8 * k, kFiletime2020);
  put32(si, 0x20, (flags & 0x02) != 0 ? 0x10 : 0x20);
  place(resident_attr(0x10, id++, si));

  const std::u16string u = utf8_to_utf16(name);
  if (u.size() > 255) throw ForgeError("name too long");
  Bytes fn(0x42 + 2 * u.size(), 0);
  put64(fn, 0x00, parent);
  for (int k = 0; k < 4; ++k) put64(fn, 0x08 + 8 * k, kFiletime2020);
  const std::uint64_t alloc =
      std::holds_alternative<ntfs::RunList>(data)
          ? std::get<ntfs::RunList>(data).total_clusters() * cluster_size()
          : align8(real_size);
  put64(fn, 0x28, alloc);
  put64(fn, 0x30, real_size);
  put32(fn, 0x38, (flags & 0x02) != 0 ? 0x10000000 : 0x20);
  fn[0x40] = static_cast<std::uint8_t>(u.size());
  fn[0x41] = 3;
  for (std::size_t i = 0; i < u.size(); ++i) put16(fn, 0x42 + 2 * i, static_cast<std::uint16_t>(u[i]));
  place(resident_attr(0x30, id++, fn, true));

  if (legacy_header) {
    // Padding attribute so the data attribute lands at 0x188.
    if (off + 0x18 > 0x188) throw ForgeError("reference layout does not fit name '" + name + "'");
    const std::size_t pad = 0x188 - off;
    place(resident_attr(0x50, id++, Bytes(pad - 0x18, 0)));
  }

  if (const auto* runs = std::get_if<ntfs::RunList>(&data)) {
    place(nonresident_attr(0x80, id++, *runs, real_size, cluster_size()));
  } else {
    place(resident_attr(0x80, id++, std::get<Bytes>(data)));
  }
  put32(r, off, 0xFFFFFFFF);
  off += 8;
  put32(r, 0x18, static_cast<std::uint32_t>(off));
  put16(r, 0x28, id);

  const std::uint16_t usn = 1;
  put16(r, usa_off, usn);
  for (std::size_t i = 1; i < usa_count; ++i) {
    const std::size_t pos = i * 512 - 2;
    r[usa_off + 2 * i] = r[pos];
    r[usa_off + 2 * i + 1] = r[pos + 1];
    put16(r, pos, usn);
  }
  return r;
}

std::uint64_t ForgedImage::ntfs_record_offset(std::uint64_t index) const {
  const std::uint64_t voff = index * geo_.mft_record_size;
  std::uint64_t start = 0;
  for (const auto& run : mft_runs_.runs) {
    const std::uint64_t bytes = run.length * cluster_size();
    if (voff < start + bytes) return *run.lcn * cluster_size() + (voff - start);
    start += bytes;
  }
  throw ForgeError("MFT record " + std::to_string(index) + " outside the MFT");
}

void ForgedImage::ntfs_store_record(std::uint64_t index, ByteView record) {
  const std::uint64_t off = ntfs_record_offset(index);
  std::copy(record.begin(), record.end(), image_.begin() + static_cast<std::ptrdiff_t>(off));
}

void ForgedImage::ntfs_write_system(std::uint32_t mft_records) {
  const std::uint64_t cs = cluster_size();
  const std::uint32_t rs = geo_.mft_record_size;
  const std::uint64_t root_ref = kRootRecord | (kRootRecord << 48);
  static const std::array<const char*, 16> names = {
      "$MFT",    "$MFTMirr", "$LogFile", "$Volume", "$AttrDef", ".",   "$Bitmap", "$Boot",
      "$BadClus", "$Secure", "$UpCase",  "$Extend", "$Quota",   "$ObjId", "$Reparse", "$UsnJrnl"};
  const std::uint64_t bitmap_bytes = align8(ceil_div(total_clusters_, 8));
  for (std::uint64_t i = 0; i < 16; ++i) {
    std::variant<Bytes, ntfs::RunList> data = Bytes{};
    std::uint64_t real = 0;
    std::uint16_t flags = 0x01;
    switch (i) {
      case 0:
        data = mft_runs_;
        real = static_cast<std::uint64_t>(mft_records) * rs;
        break;
      case 1:
        data = ntfs::RunList{{{ceil_div(4ull * rs, cs), mirror_lcn_}}};
        real = 4ull * rs;
        break;
      case 5:
      case 11:
        flags = 0x03;
        break;
      case 6:
        data = ntfs::RunList{{{bitmap_clusters_, bitmap_lcn_}}};
        real = bitmap_bytes;
        break;
      case 7:
        data = ntfs::RunList{{{ceil_div(kNtfsBootBytes, cs), 0}}};
        real = kNtfsBootBytes;
        break;
      default: break;
    }
    const Bytes rec = ntfs_record(i, flags, names[i], root_ref, data, real, false);
    ntfs_store_record(i, rec);
    if (i < 4) {
      std::copy(rec.begin(), rec.end(), image_.begin() + static_cast<std::ptrdiff_t>(mirror_lcn_ * cs + i * rs));
    }
  }
}

void ForgedImage::ntfs_write_bitmap() {
  const std::uint64_t off = bitmap_lcn_ * cluster_size();
  std::fill_n(image_.begin() + static_cast<std::ptrdiff_t>(off), bitmap_clusters_ * cluster_size(), 0);
  for (std::uint64_t c = 0; c < used_.size(); ++c) {
    if (used_[c]) image_[off + c / 8] |= static_cast<std::uint8_t>(1u << (c % 8));
  }
}

void ForgedImage::ntfs_add_file(const FileSpec& spec) {
  if (next_record_ >= mft_records_) throw ForgeError("MFT full");
  for (const auto& f : files_) {
    if (f.state == FileState::Live && f.name == spec.name) throw ForgeError("duplicate name '" + spec.name + "'");
  }
  const std::uint64_t cs = cluster_size();
  const std::uint64_t index = next_record_++;
  FileTruth t;
  t.name = spec.name;
  t.file_class = spec.file_class;
  t.size = spec.size;
  t.seed = spec.seed;
  t.mft_index = index;
  t.sparse = spec.sparse;

  const bool resident = spec.size <= kResidentLimit && !spec.sparse && !spec.fragment && !spec.at_cluster &&
                        !spec.reference_layout;
  std::variant<Bytes, ntfs::RunList> data;
  if (resident) {
    t.resident = true;
    data = expected_content(t, static_cast<std::uint32_t>(cs));
    t.sha256 = sha256_hex(std::get<Bytes>(data));
  } else {
    const std::uint64_t clusters = ceil_div(spec.size, cs);
    std::uint64_t sparse_lo = clusters;
    std::uint64_t sparse_hi = clusters;
    if (spec.sparse) {
      sparse_lo = spec.sparse->first;
      sparse_hi = spec.sparse->first + spec.sparse->second;
      if (spec.sparse->second == 0 || sparse_hi > clusters) throw ForgeError("sparse range outside file");
    }
    const auto real = allocate(clusters - (sparse_hi - sparse_lo), spec);
    std::vector<std::uint64_t> vcn(clusters, kNoCluster);
    std::size_t next = 0;
    for (std::uint64_t v = 0; v < clusters; ++v) {
      if (v < sparse_lo || v >= sparse_hi) vcn[v] = real[next++];
    }
    ntfs::RunList runs;
    for (std::uint64_t v = 0; v < clusters; ++v) {
      const bool sparse = vcn[v] == kNoCluster;
      if (!runs.runs.empty()) {
        auto& last = runs.runs.back();
        const bool extends = sparse ? last.sparse() : (!last.sparse() && *last.lcn + last.length == vcn[v]);
        if (extends) {
          ++last.length;
          continue;
        }
      }
      runs.runs.push_back({1, sparse ? std::nullopt : std::optional<std::uint64_t>(vcn[v])});
    }
    for (const auto& run : runs.runs) t.extents.push_back({run.lcn.value_or(0), run.length, run.sparse()});
    write_content(t, vcn);
    data = std::move(runs);
  }
  const Bytes rec = ntfs_record(index, 0x01, spec.name, kRootRecord | (kRootRecord << 48), data, spec.size,
                                spec.reference_layout);
  ntfs_store_record(index, rec);
  t.entry_offset = ntfs_record_offset(index);
  files_.push_back(std::move(t));
}

void ForgedImage::ntfs_delete(FileTruth& f) {
  image_[f.entry_offset + 0x16] &= static_cast<std::uint8_t>(~0x01);
  for (const auto& ext : f.extents) {
    if (ext.sparse) continue;
    for (std::uint64_t c = ext.first; c < ext.first + ext.count; ++c) used_[c] = false;
  }
}

void ForgedImage::ntfs_quick_format() {
  const std::uint64_t cs = cluster_size();
  const std::uint32_t rs = geo_.mft_record_size;
  std::fill(used_.begin(), used_.end(), false);
  const std::uint64_t boot_clusters = ceil_div(kNtfsBootBytes, cs);
  for (std::uint64_t c = 0; c < boot_clusters; ++c) used_[c] = true;
  const std::uint64_t mirror_clusters = ceil_div(4ull * rs, cs);
  for (std::uint64_t c = 0; c < mirror_clusters; ++c) used_[mirror_lcn_ + c] = true;
  const std::uint64_t mft_clusters = ceil_div(16ull * rs, cs);
  for (std::uint64_t c = 0; c < mft_clusters; ++c) used_[mft_lcn_ + c] = true;
  for (std::uint64_t c = 0; c < bitmap_clusters_; ++c) used_[bitmap_lcn_ + c] = true;
  mft_runs_.runs = {{mft_clusters, mft_lcn_}};
  mft_records_ = static_cast<std::uint32_t>(mft_clusters * cs / rs);
  // Fresh MFT space past the system records is initialised empty.
  const std::uint64_t lo = mft_lcn_ * cs + 16ull * rs;
  const std::uint64_t hi = (mft_lcn_ + mft_clusters) * cs;
  std::fill(image_.begin() + static_cast<std::ptrdiff_t>(lo), image_.begin() + static_cast<std::ptrdiff_t>(hi), 0);
  ntfs_write_boot();
  ntfs_write_system(mft_records_);
  ntfs_write_bitmap();
  next_record_ = 16;
}

// ---------------------------------------------------------------------------
// JSON

FileSpec file_spec_from_json(const nlohmann::json& j) {
  FileSpec f;
  try {
    f.name = j.at("name").get<std::string>();
    f.file_class = file_class_from_string(j.at("class").get<std::string>());
    f.size = j.at("size").get<std::uint64_t>();
    f.seed = j.value("seed", std::uint64_t{0});
    f.directory = j.value("directory", std::string{});
    f.fragment = j.value("fragment", false);
    if (j.contains("at_cluster")) f.at_cluster = j.at("at_cluster").get<std::uint64_t>();
    if (j.contains("sparse")) {
      const auto& s = j.at("sparse");
      f.sparse = std::make_pair(s.at(0).get<std::uint64_t>(), s.at(1).get<std::uint64_t>());
    }
    f.reference_layout = j.value("reference_layout", false);
  } catch (const nlohmann::json::exception& e) {
    throw ForgeError(std::string("bad file spec: ") + e.what());
  } catch (const Error& e) {
    throw ForgeError(std::string("bad file spec: ") + e.what());
  }
  if (f.name.empty()) throw ForgeError("bad file spec: empty name");
  return f;
}

CorpusSpec corpus_from_json(const nlohmann::json& j) {
  CorpusSpec spec;
  try {
    spec.kind = fs_kind_from_string(j.at("filesystem").get<std::string>());
    if (j.contains("geometry")) {
      const auto& g = j.at("geometry");
      auto& o = spec.geometry;
      o.volume_bytes = g.value("volume_bytes", o.volume_bytes);
      o.bytes_per_sector = g.value("bytes_per_sector", o.bytes_per_sector);
      o.sectors_per_cluster = g.value("sectors_per_cluster", o.sectors_per_cluster);
      o.root_entries = g.value("root_entries", o.root_entries);
      o.mft_record_size = g.value("mft_record_size", o.mft_record_size);
      o.spare_records = g.value("spare_records", o.spare_records);
      o.fragment_gap = g.value("fragment_gap", o.fragment_gap);
      o.mft_fragmented = g.value("mft_fragmented", o.mft_fragmented);
      o.label = g.value("label", o.label);
    }
    for (const auto& f : j.value("files", nlohmann::json::array())) spec.files.push_back(file_spec_from_json(f));
  } catch (const nlohmann::json::exception& e) {
    throw ForgeError(std::string("bad corpus spec: ") + e.what());
  }
  return spec;
}

nlohmann::json to_json(const CorpusSpec& spec) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : spec.files) {
    nlohmann::json o = {{"name", f.name},
                        {"class", to_string(f.file_class)},
                        {"size", f.size},
                        {"seed", f.seed}};
    if (!f.directory.empty()) o["directory"] = f.directory;
    if (f.fragment) o["fragment"] = true;
    if (f.at_cluster) o["at_cluster"] = *f.at_cluster;
    if (f.sparse) o["sparse"] = {f.sparse->first, f.sparse->second};
    if (f.reference_layout) o["reference_layout"] = true;
    files.push_back(std::move(o));
  }
  const auto& g = spec.geometry;
  return {{"filesystem", to_string(spec.kind)},
          {"geometry",
           {{"volume_bytes", g.volume_bytes},
            {"bytes_per_sector", g.bytes_per_sector},
            {"sectors_per_cluster", g.sectors_per_cluster},
            {"root_entries", g.root_entries},
            {"mft_record_size", g.mft_record_size},
            {"spare_records", g.spare_records},
            {"fragment_gap", g.fragment_gap},
            {"mft_fragmented", g.mft_fragmented},
            {"label", g.label}}},
          {"files", files}};
}

nlohmann::json to_json(const GroundTruth& t) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : t.files) {
    nlohmann::json ext = nlohmann::json::array();
    for (const auto& e : f.extents) ext.push_back({{"first", e.first}, {"count", e.count}, {"sparse", e.sparse}});
    nlohmann::json o = {{"name", f.name},
                        {"directory", f.directory},
                        {"class", to_string(f.file_class)},
                        {"size", f.size},
                        {"seed", f.seed},
                        {"sha256", f.sha256},
                        {"extents", ext},
                        {"entry_offset", f.entry_offset},
                        {"resident", f.resident},
                        {"state", to_string(f.state)}};
    o["mft_index"] = f.mft_index ? nlohmann::json(*f.mft_index) : nlohmann::json(nullptr);
    if (f.sparse) o["sparse"] = {f.sparse->first, f.sparse->second};
    files.push_back(std::move(o));
  }
  return {{"image_sha256", t.image_sha256},
          {"filesystem", to_string(t.kind)},
          {"geometry",
           {{"volume_bytes", t.volume_bytes},
            {"bytes_per_sector", t.bytes_per_sector},
            {"cluster_size", t.cluster_size},
            {"mft_record_size", t.mft_record_size},
            {"mft_lcn", t.mft_lcn}}},
          {"files", files},
          {"mutations", t.mutations}};
}

GroundTruth truth_from_json(const nlohmann::json& j) {
  GroundTruth t;
  try {
    t.image_sha256 = j.at("image_sha256").get<std::string>();
    t.kind = fs_kind_from_string(j.at("filesystem").get<std::string>());
    const auto& g = j.at("geometry");
    t.volume_bytes = g.at("volume_bytes").get<std::uint64_t>();
    t.bytes_per_sector = g.at("bytes_per_sector").get<std::uint32_t>();
    t.cluster_size = g.at("cluster_size").get<std::uint32_t>();
    t.mft_record_size = g.value("mft_record_size", 0u);
    t.mft_lcn = g.value("mft_lcn", std::uint64_t{0});
    for (const auto& o : j.at("files")) {
      FileTruth f;
      f.name = o.at("name").get<std::string>();
      f.directory = o.value("directory", std::string{});
      f.file_class = file_class_from_string(o.at("class").get<std::string>());
      f.size = o.at("size").get<std::uint64_t>();
      f.seed = o.at("seed").get<std::uint64_t>();
      f.sha256 = o.at("sha256").get<std::string>();
      for (const auto& e : o.at("extents")) {
        f.extents.push_back({e.at("first").get<std::uint64_t>(), e.at("count").get<std::uint64_t>(),
                             e.value("sparse", false)});
      }
      f.entry_offset = o.at("entry_offset").get<std::uint64_t>();
      if (o.contains("mft_index") && !o.at("mft_index").is_null()) f.mft_index = o.at("mft_index").get<std::uint64_t>();
      if (o.contains("sparse")) {
        f.sparse = std::make_pair(o.at("sparse").at(0).get<std::uint64_t>(), o.at("sparse").at(1).get<std::uint64_t>());
      }
      f.resident = o.value("resident", false);
      const auto state = o.at("state").get<std::string>();
      if (state == "live") {
        f.state = FileState::Live;
      } else if (state == "deleted") {
        f.state = FileState::Deleted;
      } else if (state == "formatted") {
        f.state = FileState::Formatted;
      } else if (state == "sanitized") {
        f.state = FileState::Sanitized;
      } else {
        throw ForgeError("unknown file state '" + state + "'");
      }
      t.files.push_back(std::move(f));
    }
    if (j.contains("mutations")) t.mutations = j.at("mutations").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ForgeError(std::string("bad ground truth: ") + e.what());
  } catch (const ForgeError&) {
    throw;
  } catch (const Error& e) {
    throw ForgeError(std::string("bad ground truth: ") + e.what());
  }
  return t;
}

void apply_mutations(ForgedImage& image, const nlohmann::json& ops) {
  if (!ops.is_array()) throw ForgeError("mutations must be a list");
  for (const auto& op : ops) {
    std::string kind;
    try {
      kind = op.at("op").get<std::string>();
      if (kind == "delete") {
        image.delete_metadata_only(op.value("name", std::string("*")));
      } else if (kind == "quick_format") {
        image.quick_format();
      } else if (kind == "full_overwrite") {
        image.full_overwrite();
      } else if (kind == "write") {
        image.write_file(file_spec_from_json(op.at("file")));
      } else if (kind == "corrupt_fixup") {
        image.corrupt_fixup(op.at("record").get<std::uint64_t>());
      } else {
        throw ForgeError("unknown mutation '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ForgeError("bad mutation '" + kind + "': " + e.what());
    }
  }
}

CorpusSpec table1_corpus(FsKind kind) {
  CorpusSpec spec;
  spec.kind = kind;
  switch (kind) {
    case FsKind::Fat12: spec.geometry.sectors_per_cluster = 64; break;
    case FsKind::Fat16: spec.geometry.sectors_per_cluster = 4; break;
    case FsKind::Fat32: spec.geometry.sectors_per_cluster = 1; break;
    case FsKind::Ntfs:
      spec.geometry.sectors_per_cluster = 8;
      spec.geometry.mft_fragmented = true;
      break;
  }
  struct Row {
    FileClass cls;
    const char* stem;
    const char* ext;
    std::array<std::uint64_t, 3> sizes;
  };
  const std::array<Row, 6> rows = {{
      {FileClass::Document, "DOC", "PDF", {1, 5000, 300000}},
      {FileClass::Image, "IMG", "JPG", {900, 65539, 1572864}},
      {FileClass::Audio, "AUD", "MP3", {4096, 777777, 2097152}},
      {FileClass::Video, "VID", "MP4", {12345, 1048576, 4194304}},
      {FileClass::Compressed, "ZIP", "ZIP", {600, 250000, 3000000}},
      {FileClass::Executable, "EXE", "EXE", {100, 40000, 1234567}},
  }};
  std::uint64_t seed = 1000;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.sizes.size(); ++i) {
      FileSpec f;
      f.name = std::string(row.stem) + std::to_string(i + 1) + "." + row.ext;
      f.file_class = row.cls;
      f.size = row.sizes[i];
      f.seed = seed++;
      if (kind != FsKind::Ntfs) f.directory = "DATA";
      if (kind == FsKind::Ntfs && row.cls == FileClass::Document && i == 2) f.reference_layout = true;
      spec.files.push_back(std::move(f));
    }
  }
  return spec;
}

}  // namespace remnant::forge
