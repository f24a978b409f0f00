#include "remnant/fat.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace remnant::fat {

namespace {

struct DirSource {
  Bytes bytes;
  std::vector<std::uint64_t> slot_base;  // volume offset of each slot
};

DirSource read_dir_clusters(const VolumeImage& img, const VolumeDescriptor& desc,
                            std::span<const std::uint64_t> clusters) {
  DirSource src;
  src.bytes = read_clusters(img, desc, clusters);
  const std::uint64_t per_cluster = desc.cluster_size() / kEntrySize;
  for (auto c : clusters) {
    const std::uint64_t base = cluster_offset(desc, c);
    for (std::uint64_t i = 0; i < per_cluster; ++i) src.slot_base.push_back(base + i * kEntrySize);
  }
  return src;
}

std::uint8_t lfn_checksum(const std::array<std::uint8_t, 11>& name) {
  std::uint8_t sum = 0;
  for (auto b : name) sum = static_cast<std::uint8_t>(((sum & 1) << 7) + (sum >> 1) + b);
  return sum;
}

std::u16string lfn_fragment(ByteView slot) {
  std::u16string out;
  auto take = [&](std::size_t off, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto ch = load_le<std::uint16_t>(slot, off + 2 * i);
      if (ch == 0x0000 || ch == 0xFFFF) return false;
      out.push_back(static_cast<char16_t>(ch));
    }
    return true;
  };
  take(1, 5) && take(14, 6) && take(28, 2);
  return out;
}

std::string utf16_to_utf8(const std::u16string& s) {
  std::string out;
  for (char16_t ch : s) {
    const std::uint32_t cp = ch;
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

// Parses slots up to the end marker; LFN slots are folded into the entry
// that follows them.
std::vector<FatDirEntry> parse_directory(const DirSource& src, bool fat32, bool orphaned) {
  std::vector<FatDirEntry> out;
  std::vector<std::u16string> pending;
  const std::size_t slots = src.bytes.size() / kEntrySize;
  for (std::size_t i = 0; i < slots; ++i) {
    ByteView slot = ByteView(src.bytes).subspan(i * kEntrySize, kEntrySize);
    if (slot[0] == 0x00) break;
    if ((slot[11] & 0x3F) == kAttrLongName) {
      pending.push_back(lfn_fragment(slot));
      continue;
    }
    FatDirEntry e = parse_dir_entry(slot, fat32);
    e.volume_offset = src.slot_base[i];
    e.slot = static_cast<std::uint32_t>(i);
    e.orphaned = orphaned;
    if (!pending.empty()) {
      bool checksum_ok = true;
      if (!e.deleted()) {
        const std::uint8_t expect = lfn_checksum(e.raw_name);
        // The checksum of each LFN slot sits at byte 13 of that slot.
        for (std::size_t k = 1; k <= pending.size(); ++k) {
          if (src.bytes[(i - k) * kEntrySize + 13] != expect) checksum_ok = false;
        }
      }
      if (checksum_ok) {
        std::u16string full;
        for (auto it = pending.rbegin(); it != pending.rend(); ++it) full += *it;
        e.long_name = utf16_to_utf8(full);
      }
      pending.clear();
    }
    out.push_back(std::move(e));
  }
  return out;
}

bool plausible_slot(ByteView slot) {
  const std::uint8_t first = slot[0];
  const std::uint8_t attr = slot[11];
  if ((attr & 0x3F) == kAttrLongName) return true;
  if ((attr & 0xC0) != 0) return false;
  if (first != kDeletedMarker && first != 0x05 && first < 0x20) return false;
  for (std::size_t i = 1; i < 11; ++i) {
    if (slot[i] < 0x20 || slot[i] == 0x7F) return false;
  }
  return true;
}

// Slots up to the end marker all look like directory entries. Returns the
// number of slots before the end marker, or nullopt if something does not parse.
std::optional<std::size_t> directory_like(ByteView cluster) {
  const std::size_t slots = cluster.size() / kEntrySize;
  for (std::size_t i = 0; i < slots; ++i) {
    ByteView slot = cluster.subspan(i * kEntrySize, kEntrySize);
    if (slot[0] == 0x00) return i;
    if (!plausible_slot(slot)) return std::nullopt;
  }
  return slots;
}

bool is_dot_slot(ByteView slot, bool dotdot) {
  static const std::array<std::uint8_t, 11> dot = {'.', ' ', ' ', ' ', ' ', ' ', ' ', ' ', ' ', ' ', ' '};
  static const std::array<std::uint8_t, 11> dot2 = {'.', '.', ' ', ' ', ' ', ' ', ' ', ' ', ' ', ' ', ' '};
  const auto& want = dotdot ? dot2 : dot;
  return std::equal(want.begin(), want.end(), slot.begin()) && (slot[11] & kAttrDirectory) != 0;
}

bool starts_directory(ByteView cluster) {
  return cluster.size() >= 2 * kEntrySize && is_dot_slot(cluster.subspan(0, kEntrySize), false) &&
         is_dot_slot(cluster.subspan(kEntrySize, kEntrySize), true);
}

std::string trim_right(std::string s) {
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

std::string orphan_path(std::uint64_t cluster) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "orphan-%010llu/", static_cast<unsigned long long>(cluster));
  return buf;
}

}  // namespace

std::string FatDirEntry::short_name() const {
  std::string base(raw_name.begin(), raw_name.begin() + 8);
  std::string ext(raw_name.begin() + 8, raw_name.end());
  base = trim_right(base);
  ext = trim_right(ext);
  if (!base.empty() && static_cast<std::uint8_t>(base[0]) == 0x05) base[0] = static_cast<char>(0xE5);
  return ext.empty() ? base : base + "." + ext;
}

FatDirEntry parse_dir_entry(ByteView slot, bool high_cluster) {
  if (slot.size() < kEntrySize) throw RangeError("directory slot shorter than 32 bytes");
  FatDirEntry e;
  std::copy_n(slot.begin(), 11, e.raw_name.begin());
  e.attributes = slot[11];
  e.create_time = load_le<std::uint16_t>(slot, 14);
  e.create_date = load_le<std::uint16_t>(slot, 16);
  const std::uint32_t hi = high_cluster ? load_le<std::uint16_t>(slot, 20) : 0;
  e.write_time = load_le<std::uint16_t>(slot, 22);
  e.write_date = load_le<std::uint16_t>(slot, 24);
  e.first_cluster = (hi << 16) | load_le<std::uint16_t>(slot, 26);
  e.size = load_le<std::uint32_t>(slot, 28);
  return e;
}

FatTable FatTable::read(const VolumeImage& img, const VolumeDescriptor& desc) {
  if (!is_fat(desc.kind)) throw FormatError("not a FAT volume");
  const std::uint64_t bytes = static_cast<std::uint64_t>(desc.sectors_per_fat) * desc.bytes_per_sector;
  Bytes raw = img.read(static_cast<std::uint64_t>(desc.reserved_sectors) * desc.bytes_per_sector,
                       static_cast<std::size_t>(bytes));
  FatTable t;
  t.kind_ = desc.kind;
  const std::size_t n = static_cast<std::size_t>(desc.cluster_count) + 2;
  t.entries_.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    switch (desc.kind) {
      case FsKind::Fat12: {
        const std::size_t off = c + c / 2;
        const std::uint16_t v = off + 1 < raw.size() ? load_le<std::uint16_t>(raw, off) : raw.at(off);
        t.entries_[c] = (c & 1) ? (v >> 4) : (v & 0x0FFF);
        break;
      }
      case FsKind::Fat16: t.entries_[c] = load_le<std::uint16_t>(raw, c * 2); break;
      default: t.entries_[c] = load_le<std::uint32_t>(raw, c * 4) & 0x0FFFFFFF; break;
    }
  }
  return t;
}

FatTable FatTable::all_free(const VolumeDescriptor& desc) {
  FatTable t;
  t.kind_ = desc.kind;
  t.entries_.assign(static_cast<std::size_t>(desc.cluster_count) + 2, 0);
  return t;
}

FatTable::State FatTable::state(std::uint64_t cluster) const {
  if (cluster < 2 || cluster >= entries_.size()) return State::Reserved;
  const std::uint32_t v = entries_[cluster];
  const std::uint32_t bad = kind_ == FsKind::Fat12 ? 0xFF7 : kind_ == FsKind::Fat16 ? 0xFFF7 : 0x0FFFFFF7;
  if (v == 0) return State::Free;
  if (v == bad) return State::Bad;
  if (v > bad) return State::EndOfChain;
  if (v < 2 || v >= entries_.size()) return State::Reserved;
  return State::Next;
}

bool FatTable::allocated(std::uint64_t cluster) const { return state(cluster) != State::Free; }

std::vector<std::uint64_t> FatTable::chain(std::uint64_t start) const {
  std::vector<std::uint64_t> out;
  std::set<std::uint64_t> seen;
  std::uint64_t c = start;
  while (c >= 2 && c < entries_.size() && seen.insert(c).second) {
    const State s = state(c);
    if (s == State::Free || s == State::Bad || s == State::Reserved) break;
    out.push_back(c);
    if (s == State::EndOfChain) break;
    c = entries_[c];
  }
  return out;
}

FatScan scan_fat_directories(const VolumeImage& img, const VolumeDescriptor& desc, ScanOptions opts) {
  if (!is_fat(desc.kind)) throw FormatError("not a FAT volume");
  const bool fat32 = desc.kind == FsKind::Fat32;
  FatScan scan;
  FatTable fat = FatTable::all_free(desc);
  try {
    fat = FatTable::read(img, desc);
  } catch (const Error&) {
    scan.fat_readable = false;
    scan.warnings.emplace_back("FAT unreadable; continuing in carve-only mode");
    opts.deep = true;
  }

  std::vector<bool> live(static_cast<std::size_t>(desc.end_cluster()), false);
  auto mark_live = [&](std::span<const std::uint64_t> chain) {
    for (auto c : chain) live[static_cast<std::size_t>(c)] = true;
  };

  // Root directory.
  DirSource root;
  if (fat32) {
    auto chain = scan.fat_readable ? fat.chain(desc.root_cluster) : std::vector<std::uint64_t>{};
    if (chain.empty()) chain.push_back(desc.root_cluster);
    mark_live(chain);
    root = read_dir_clusters(img, desc, chain);
  } else {
    const std::uint64_t off = static_cast<std::uint64_t>(desc.root_dir_sector) * desc.bytes_per_sector;
    root.bytes = img.read(off, static_cast<std::size_t>(desc.root_entry_count) * kEntrySize);
    for (std::uint32_t i = 0; i < desc.root_entry_count; ++i) root.slot_base.push_back(off + i * kEntrySize);
  }

  struct Pending {
    std::string path;
    std::vector<FatDirEntry> entries;
  };
  std::vector<Pending> queue;
  queue.push_back({"/", parse_directory(root, fat32, false)});
  std::set<std::uint64_t> visited;
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    const std::string path = queue[qi].path;
    for (const auto& e : queue[qi].entries) {
      scan.entries.push_back({path, e});
      if (!scan.fat_readable || e.deleted() || e.is_dot() || e.is_volume_label() || e.first_cluster < 2) {
        continue;
      }
      auto chain = fat.chain(e.first_cluster);
      mark_live(chain);
      if (!e.is_directory() || chain.empty() || !visited.insert(e.first_cluster).second) continue;
      try {
        DirSource sub = read_dir_clusters(img, desc, chain);
        const std::string name = e.long_name.empty() ? e.short_name() : e.long_name;
        queue.push_back({path + name + "/", parse_directory(sub, fat32, false)});
      } catch (const RangeError&) {
        scan.warnings.push_back("unreadable directory " + path + e.short_name());
      }
    }
  }

  if (opts.deep) {
    const std::uint64_t cs = desc.cluster_size();
    const std::uint64_t end = desc.end_cluster();
    constexpr std::uint64_t kBatch = 2048;
    Bytes batch;
    std::uint64_t batch_first = 0;
    auto cluster_bytes = [&](std::uint64_t c) -> ByteView {
      if (batch.empty() || c < batch_first || c >= batch_first + batch.size() / cs) {
        batch_first = c;
        batch = read_cluster_run(img, desc, c, std::min(kBatch, end - c));
      }
      return ByteView(batch).subspan(static_cast<std::size_t>((c - batch_first) * cs), cs);
    };
    for (std::uint64_t c = 2; c < end; ++c) {
      if (live[static_cast<std::size_t>(c)] || !starts_directory(cluster_bytes(c))) continue;
      std::vector<std::uint64_t> clusters = {c};
      auto used = directory_like(cluster_bytes(c));
      if (!used) continue;
      // Follow contiguous continuation clusters while the directory has not ended.
      std::uint64_t next = c + 1;
      while (*used == cs / kEntrySize && next < end && !live[static_cast<std::size_t>(next)]) {
        ByteView nb = cluster_bytes(next);
        if (starts_directory(nb)) break;
        auto more = directory_like(nb);
        if (!more || *more == 0) break;
        clusters.push_back(next);
        used = more;
        ++next;
      }
      DirSource src = read_dir_clusters(img, desc, clusters);
      const std::string path = orphan_path(c);
      for (auto& e : parse_directory(src, fat32, true)) scan.entries.push_back({path, std::move(e)});
      ++scan.carved_directories;
    }
  }

  std::stable_sort(scan.entries.begin(), scan.entries.end(), [](const DirListing& a, const DirListing& b) {
    if (a.path != b.path) return a.path < b.path;
    return a.entry.slot < b.entry.slot;
  });
  return scan;
}

std::string DeletedFatEntry::entry_id() const { return "fat@" + std::to_string(entry.volume_offset); }

std::vector<DeletedFatEntry> find_deleted(std::span<const DirListing> entries,
                                          const VolumeDescriptor& desc) {
  std::vector<DeletedFatEntry> out;
  for (const auto& [path, e] : entries) {
    if (e.is_long_name() || e.is_dot() || e.is_volume_label() || e.end_marker()) continue;
    if (!e.deleted() && !e.orphaned) continue;
    DeletedFatEntry d;
    d.path = path;
    d.entry = e;
    d.first_cluster = e.first_cluster;
    d.size = e.size;
    d.directory = e.is_directory();
    d.orphaned = e.orphaned;
    if (!e.long_name.empty()) {
      d.name = e.long_name;
    } else {
      d.name = e.short_name();
      if (e.deleted() && !d.name.empty()) d.name[0] = '_';
    }
    const bool needs_clusters = d.size > 0 || d.directory;
    if (needs_clusters && (d.first_cluster < 2 || d.first_cluster >= desc.end_cluster())) {
      d.confidence = Confidence::FragmentedUnknown;
    }
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

int severity(Confidence c) {
  switch (c) {
    case Confidence::Exact: return 0;
    case Confidence::Heuristic: return 1;
    case Confidence::ContiguousHeuristic: return 2;
    case Confidence::FragmentedUnknown: return 3;
  }
  return 3;
}

Confidence worse(Confidence a, Confidence b) { return severity(a) >= severity(b) ? a : b; }

}  // namespace

ChainHypothesis reconstruct_chain(const DeletedFatEntry& entry, const FatTable& fat,
                                  const VolumeDescriptor& desc) {
  ChainHypothesis h;
  h.confidence = entry.confidence;
  if (entry.size == 0) return h;
  const std::uint64_t cs = desc.cluster_size();
  const std::uint64_t needed = ceil_div(entry.size, cs);
  const std::uint64_t end = desc.end_cluster();
  const std::uint64_t first = entry.first_cluster;
  if (first < 2 || first >= end) {
    h.confidence = Confidence::FragmentedUnknown;
    return h;
  }
  if (fat.allocated(first)) {
    h.confidence = Confidence::FragmentedUnknown;
    for (std::uint64_t c = first; c < end && h.clusters.size() < needed; ++c) h.clusters.push_back(c);
    h.truncated = h.clusters.size() < needed;
    return h;
  }
  bool skipped = false;
  for (std::uint64_t c = first; c < end && h.clusters.size() < needed; ++c) {
    if (fat.allocated(c)) {
      skipped = true;
      continue;
    }
    h.clusters.push_back(c);
  }
  h.truncated = h.clusters.size() < needed;
  if (skipped) h.confidence = worse(h.confidence, Confidence::ContiguousHeuristic);
  return h;
}

void resolve_chain(DeletedFatEntry& entry, const FatTable& fat, const VolumeDescriptor& desc) {
  auto h = reconstruct_chain(entry, fat, desc);
  entry.chain = std::move(h.clusters);
  entry.confidence = h.confidence;
  entry.chain_truncated = h.truncated;
}

RecoveredFile recover_fat_file(const VolumeImage& img, const VolumeDescriptor& desc,
                               const DeletedFatEntry& entry, ByteSink& sink) {
  RecoveredFile rf;
  rf.name = entry.name;
  rf.fs = desc.kind;
  rf.entry_id = entry.entry_id();
  rf.entry_offset = entry.entry.volume_offset;
  rf.expected_size = entry.size;
  rf.confidence = entry.confidence;
  rf.clusters = coalesce(entry.chain);
  if (entry.orphaned) rf.flags.emplace_back("orphan");

  RecoveryWriter writer(sink);
  std::uint64_t remaining = entry.size;
  std::vector<std::uint64_t> valid;
  for (auto c : entry.chain) {
    if (c >= 2 && c < desc.end_cluster()) valid.push_back(c);
  }
  const bool off_heap = valid.size() != entry.chain.size();
  constexpr std::size_t kBatch = 256;
  for (std::size_t i = 0; i < valid.size() && remaining > 0; i += kBatch) {
    const std::size_t n = std::min(kBatch, valid.size() - i);
    Bytes block = read_clusters(img, desc, std::span<const std::uint64_t>(valid).subspan(i, n));
    const auto take = static_cast<std::size_t>(std::min<std::uint64_t>(block.size(), remaining));
    writer.write(ByteView(block.data(), take));
    remaining -= take;
  }
  if (remaining > 0 || entry.chain_truncated || off_heap) {
    rf.flags.emplace_back("truncated");
    rf.confidence = worse(rf.confidence, Confidence::Heuristic);
  }
  if (entry.confidence == Confidence::ContiguousHeuristic ||
      entry.confidence == Confidence::FragmentedUnknown) {
    rf.flags.emplace_back("overwritten-risk");
  }
  rf.length = writer.length();
  rf.file_class = classify(writer.head(), entry.name);
  rf.sha256 = writer.finish();
  return rf;
}

std::string dos_datetime_to_iso(std::uint16_t date, std::uint16_t time) {
  if (date == 0) return {};
  const int year = 1980 + (date >> 9);
  const int month = (date >> 5) & 0x0F;
  const int day = date & 0x1F;
  const int hour = time >> 11;
  const int minute = (time >> 5) & 0x3F;
  const int second = (time & 0x1F) * 2;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d", year, month, day, hour, minute, second);
  return buf;
}

}  // namespace remnant::fat
