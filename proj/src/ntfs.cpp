#include "remnant/ntfs.hpp"

#include <algorithm>
#include <ctime>
#include <limits>

namespace remnant::ntfs {

namespace {

constexpr std::array<char, 4> kFileMagic = {'F', 'I', 'L', 'E'};
constexpr std::uint64_t kUnknownIndex = std::numeric_limits<std::uint64_t>::max();

std::string utf16le_to_utf8(ByteView raw) {
  std::string out;
  std::size_t i = 0;
  while (i + 1 < raw.size()) {
    std::uint32_t cp = load_le<std::uint16_t>(raw, i);
    i += 2;
    if (cp >= 0xD800 && cp <= 0xDBFF && i + 1 < raw.size()) {
      const std::uint32_t lo = load_le<std::uint16_t>(raw, i);
      if (lo >= 0xDC00 && lo <= 0xDFFF) {
        cp = 0x10000 + ((cp - 0xD800) << 10) + (lo - 0xDC00);
        i += 2;
      }
    }
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

bool all_zero(ByteView b) {
  return std::all_of(b.begin(), b.end(), [](std::uint8_t v) { return v == 0; });
}

bool has_file_magic(ByteView b) {
  return b.size() >= 4 && std::equal(kFileMagic.begin(), kFileMagic.end(), b.begin());
}

// Reads `len` bytes at virtual offset `voff` of a non-resident stream.
// Returns nullopt if any part falls in a sparse run or outside the runs.
std::optional<Bytes> read_virtual(const VolumeImage& img, const VolumeDescriptor& desc,
                                  const RunList& runs, std::uint64_t voff, std::size_t len) {
  const std::uint64_t cs = desc.cluster_size();
  Bytes out;
  out.reserve(len);
  std::uint64_t run_start = 0;  // virtual byte offset of the current run
  for (const auto& run : runs.runs) {
    const std::uint64_t run_bytes = run.length * cs;
    const std::uint64_t run_end = run_start + run_bytes;
    const std::uint64_t want = voff + out.size();
    if (want < run_end && out.size() < len) {
      if (run.sparse()) return std::nullopt;
      const std::uint64_t within = want - run_start;
      const auto take = static_cast<std::size_t>(std::min<std::uint64_t>(len - out.size(), run_bytes - within));
      const std::uint64_t abs = cluster_offset(desc, *run.lcn) + within;
      Bytes part = img.read(abs, take);
      out.insert(out.end(), part.begin(), part.end());
    }
    run_start = run_end;
    if (out.size() == len) return out;
  }
  return std::nullopt;
}

std::optional<std::uint64_t> virtual_to_volume(const VolumeDescriptor& desc, const RunList& runs,
                                               std::uint64_t voff) {
  const std::uint64_t cs = desc.cluster_size();
  std::uint64_t run_start = 0;
  for (const auto& run : runs.runs) {
    const std::uint64_t run_bytes = run.length * cs;
    if (voff < run_start + run_bytes) {
      if (run.sparse()) return std::nullopt;
      return *run.lcn * cs + (voff - run_start);
    }
    run_start += run_bytes;
  }
  return std::nullopt;
}

}  // namespace

MftRecordHeader parse_record_header(ByteView rec) {
  if (rec.size() < 42) throw CorruptError("record shorter than header");
  MftRecordHeader h;
  std::copy_n(rec.begin(), 4, h.signature.begin());
  if (h.signature != kFileMagic) throw CorruptError("bad record signature");
  h.usa_offset = load_le<std::uint16_t>(rec, 0x04);
  h.usa_count = load_le<std::uint16_t>(rec, 0x06);
  h.lsn = load_le<std::uint64_t>(rec, 0x08);
  h.sequence = load_le<std::uint16_t>(rec, 0x10);
  h.link_count = load_le<std::uint16_t>(rec, 0x12);
  h.first_attribute_offset = load_le<std::uint16_t>(rec, 0x14);
  h.flags = load_le<std::uint16_t>(rec, 0x16);
  h.used_size = load_le<std::uint32_t>(rec, 0x18);
  h.allocated_size = load_le<std::uint32_t>(rec, 0x1C);
  h.base_record = load_le<std::uint64_t>(rec, 0x20);
  if (h.usa_offset >= 0x30) h.record_number = load_le<std::uint32_t>(rec, 0x2C);

  if (h.allocated_size != rec.size() || h.used_size > h.allocated_size ||
      h.first_attribute_offset >= h.used_size ||
      static_cast<std::uint32_t>(h.usa_offset) + 2u * h.usa_count > h.first_attribute_offset) {
    throw CorruptError("inconsistent record header");
  }
  return h;
}

bool apply_fixup(std::span<std::uint8_t> rec, std::uint32_t stride) {
  if (rec.size() < 8) return false;
  const auto usa_offset = load_le<std::uint16_t>(rec, 0x04);
  const auto usa_count = load_le<std::uint16_t>(rec, 0x06);
  if (usa_count < 2 || static_cast<std::size_t>(usa_count - 1) * stride > rec.size() ||
      static_cast<std::size_t>(usa_offset) + 2u * usa_count > rec.size()) {
    return false;
  }
  const auto usn = load_le<std::uint16_t>(rec, usa_offset);
  for (std::size_t i = 1; i < usa_count; ++i) {
    const std::size_t pos = i * stride - 2;
    if (load_le<std::uint16_t>(rec, pos) != usn) return false;
  }
  for (std::size_t i = 1; i < usa_count; ++i) {
    const std::size_t pos = i * stride - 2;
    rec[pos] = rec[usa_offset + 2 * i];
    rec[pos + 1] = rec[usa_offset + 2 * i + 1];
  }
  return true;
}

bool is_deleted(const MftRecordHeader& hdr) { return !hdr.in_use(); }

std::uint64_t RunList::total_clusters() const {
  std::uint64_t n = 0;
  for (const auto& r : runs) n += r.length;
  return n;
}

RunList decode_data_runs(ByteView raw) {
  RunList out;
  std::size_t pos = 0;
  std::int64_t lcn = 0;
  while (pos < raw.size()) {
    const std::uint8_t header = raw[pos++];
    if (header == 0) break;
    const unsigned len_bytes = header & 0x0F;
    const unsigned off_bytes = header >> 4;
    if (len_bytes == 0 || len_bytes > 8 || off_bytes > 8) throw CorruptError("invalid run");
    if (raw.size() - pos < len_bytes + off_bytes) throw CorruptError("run list truncated");

    std::uint64_t length = 0;
    for (unsigned i = 0; i < len_bytes; ++i) length |= static_cast<std::uint64_t>(raw[pos + i]) << (8 * i);
    pos += len_bytes;
    if (length == 0) throw CorruptError("invalid run");

    if (off_bytes == 0) {
      out.runs.push_back({length, std::nullopt});
      continue;
    }
    std::uint64_t delta_bits = 0;
    for (unsigned i = 0; i < off_bytes; ++i) delta_bits |= static_cast<std::uint64_t>(raw[pos + i]) << (8 * i);
    pos += off_bytes;
    if (off_bytes < 8 && (raw[pos - 1] & 0x80) != 0) delta_bits |= ~std::uint64_t{0} << (8 * off_bytes);
    lcn += static_cast<std::int64_t>(delta_bits);
    if (lcn < 0) throw CorruptError("invalid run");
    out.runs.push_back({length, static_cast<std::uint64_t>(lcn)});
  }
  return out;
}

const ParsedAttribute* AttributeWalk::find(std::uint32_t type, bool unnamed_only) const {
  for (const auto& a : attributes) {
    if (a.type == type && (!unnamed_only || a.name.empty())) return &a;
  }
  return nullptr;
}

AttributeWalk parse_attributes(ByteView rec, const MftRecordHeader& hdr) {
  AttributeWalk walk;
  const std::size_t used = std::min<std::size_t>(hdr.used_size, rec.size());
  std::size_t off = hdr.first_attribute_offset;
  auto overrun = [&walk] {
    walk.corrupt = true;
    walk.error = "attribute walk overrun";
    return walk;
  };
  while (true) {
    if (off + 4 > used) return overrun();
    const auto type = load_le<std::uint32_t>(rec, off);
    if (type == kAttrEnd) break;
    if (off + 0x18 > used) return overrun();
    const auto length = load_le<std::uint32_t>(rec, off + 4);
    if (length < 0x18 || length > used - off) return overrun();
    ByteView attr = rec.subspan(off, length);

    ParsedAttribute a;
    a.type = type;
    a.record_offset = static_cast<std::uint32_t>(off);
    a.length = length;
    a.resident = attr[0x08] == 0;
    const std::uint8_t name_len = attr[0x09];
    const auto name_off = load_le<std::uint16_t>(attr, 0x0A);
    a.flags = load_le<std::uint16_t>(attr, 0x0C);
    a.id = load_le<std::uint16_t>(attr, 0x0E);
    if (name_len > 0) {
      if (static_cast<std::size_t>(name_off) + 2u * name_len > length) return overrun();
      a.name = utf16le_to_utf8(attr.subspan(name_off, 2u * name_len));
    }
    if (a.resident) {
      const auto vlen = load_le<std::uint32_t>(attr, 0x10);
      const auto voff = load_le<std::uint16_t>(attr, 0x14);
      if (static_cast<std::uint64_t>(voff) + vlen > length) return overrun();
      a.value.assign(attr.begin() + voff, attr.begin() + voff + vlen);
      a.real_size = vlen;
      a.allocated_size = vlen;
    } else {
      if (length < 0x40) return overrun();
      a.start_vcn = load_le<std::uint64_t>(attr, 0x10);
      a.last_vcn = load_le<std::uint64_t>(attr, 0x18);
      const auto rl_off = load_le<std::uint16_t>(attr, 0x20);
      a.compression_unit = load_le<std::uint16_t>(attr, 0x22);
      a.allocated_size = load_le<std::uint64_t>(attr, 0x28);
      a.real_size = load_le<std::uint64_t>(attr, 0x30);
      a.initialized_size = load_le<std::uint64_t>(attr, 0x38);
      if (rl_off > length) return overrun();
      a.run_list.assign(attr.begin() + rl_off, attr.end());
    }
    walk.attributes.push_back(std::move(a));
    off += length;
  }
  return walk;
}

std::optional<StandardInfoView> standard_info(const AttributeWalk& walk) {
  const auto* a = walk.find(kAttrStandardInformation);
  if (a == nullptr || !a->resident || a->value.size() < 0x24) return std::nullopt;
  StandardInfoView v;
  v.creation_time = load_le<std::uint64_t>(a->value, 0x00);
  v.modification_time = load_le<std::uint64_t>(a->value, 0x08);
  v.mft_change_time = load_le<std::uint64_t>(a->value, 0x10);
  v.access_time = load_le<std::uint64_t>(a->value, 0x18);
  v.file_attributes = load_le<std::uint32_t>(a->value, 0x20);
  return v;
}

std::optional<FileNameView> file_name(const AttributeWalk& walk) {
  // Lower rank wins: Win32, Win32&DOS, POSIX, then DOS 8.3.
  auto rank = [](std::uint8_t ns) {
    switch (ns) {
      case 1: return 0;
      case 3: return 1;
      case 0: return 2;
      default: return 3;
    }
  };
  std::optional<FileNameView> best;
  for (const auto& a : walk.attributes) {
    if (a.type != kAttrFileName || !a.resident || a.value.size() < 0x42) continue;
    const std::uint8_t len = a.value[0x40];
    if (a.value.size() < 0x42u + 2u * len || len == 0) continue;
    FileNameView v;
    v.parent_reference = load_le<std::uint64_t>(a.value, 0x00);
    v.creation_time = load_le<std::uint64_t>(a.value, 0x08);
    v.modification_time = load_le<std::uint64_t>(a.value, 0x10);
    v.allocated_size = load_le<std::uint64_t>(a.value, 0x28);
    v.real_size = load_le<std::uint64_t>(a.value, 0x30);
    v.name_space = a.value[0x41];
    v.name = utf16le_to_utf8(ByteView(a.value).subspan(0x42, 2u * len));
    if (!best || rank(v.name_space) < rank(best->name_space)) best = std::move(v);
  }
  return best;
}

MftScan scan_mft(const VolumeImage& img, const VolumeDescriptor& desc) {
  if (desc.kind != FsKind::Ntfs) throw FormatError("not an NTFS volume");
  const std::uint32_t rs = desc.mft_record_size;
  MftScan scan;

  Bytes rec0;
  try {
    rec0 = img.read(cluster_offset(desc, desc.mft_lcn), rs);
  } catch (const RangeError&) {
    throw CorruptError("MFT unreadable");
  }
  if (!has_file_magic(rec0) || !apply_fixup(rec0)) throw CorruptError("MFT unreadable");
  std::uint64_t mft_bytes = 0;
  try {
    auto hdr = parse_record_header(rec0);
    auto walk = parse_attributes(rec0, hdr);
    const auto* data = walk.find(kAttrData, true);
    if (data == nullptr || data->resident) throw CorruptError("MFT unreadable");
    scan.mft_runs = decode_data_runs(data->run_list);
    mft_bytes = data->real_size;
  } catch (const CorruptError&) {
    throw CorruptError("MFT unreadable");
  }
  if (scan.mft_runs.runs.empty()) throw CorruptError("MFT unreadable");

  const std::uint64_t covered = scan.mft_runs.total_clusters() * desc.cluster_size();
  const std::uint64_t record_count = std::min(mft_bytes, covered) / rs;
  for (std::uint64_t i = 0; i < record_count; ++i) {
    std::optional<Bytes> raw;
    try {
      raw = read_virtual(img, desc, scan.mft_runs, i * rs, rs);
    } catch (const RangeError&) {
      raw.reset();
    }
    if (!raw) {
      ++scan.bad_signature;
      continue;
    }
    if (all_zero(*raw)) {
      ++scan.empty_records;
      continue;
    }
    if (!has_file_magic(*raw)) {
      ++scan.bad_signature;
      continue;
    }
    if (!apply_fixup(*raw)) {
      ++scan.corrupt_fixup;
      continue;
    }
    MftRecord rec;
    try {
      rec.header = parse_record_header(*raw);
    } catch (const CorruptError&) {
      ++scan.bad_signature;
      continue;
    }
    rec.bytes = std::move(*raw);
    rec.index = i;
    rec.volume_offset = virtual_to_volume(desc, scan.mft_runs, i * rs).value_or(0);
    scan.records.push_back(std::move(rec));
  }
  return scan;
}

void ClusterClaims::add(std::uint64_t first, std::uint64_t count) {
  if (count == 0) return;
  std::uint64_t lo = first;
  std::uint64_t hi = first + count;
  auto it = intervals_.upper_bound(lo);
  if (it != intervals_.begin()) {
    auto prev = std::prev(it);
    if (prev->second >= lo) {
      lo = prev->first;
      hi = std::max(hi, prev->second);
      it = intervals_.erase(prev);
    }
  }
  while (it != intervals_.end() && it->first <= hi) {
    hi = std::max(hi, it->second);
    it = intervals_.erase(it);
  }
  intervals_.emplace(lo, hi);
}

bool ClusterClaims::overlaps(std::uint64_t first, std::uint64_t count) const {
  if (count == 0) return false;
  const std::uint64_t end = first + count;
  auto it = intervals_.upper_bound(first);
  if (it != intervals_.begin() && std::prev(it)->second > first) return true;
  return it != intervals_.end() && it->first < end;
}

ClusterClaims live_claims(const MftScan& scan, const VolumeDescriptor& desc) {
  ClusterClaims claims;
  for (const auto& rec : scan.records) {
    if (!rec.header.in_use() || rec.orphan) continue;
    auto walk = parse_attributes(rec.bytes, rec.header);
    for (const auto& a : walk.attributes) {
      if (a.resident) continue;
      try {
        for (const auto& run : decode_data_runs(a.run_list).runs) {
          if (!run.sparse() && *run.lcn < desc.end_cluster()) claims.add(*run.lcn, run.length);
        }
      } catch (const CorruptError&) {
        // A live record with a broken run list claims nothing we can trust.
      }
    }
  }
  return claims;
}

MftScan carve_orphan_records(const VolumeImage& img, const VolumeDescriptor& desc,
                             const MftScan& live, const ClusterClaims& claims) {
  MftScan out;
  const std::uint64_t cs = desc.cluster_size();
  const std::uint32_t rs = desc.mft_record_size;
  const std::uint32_t step = desc.bytes_per_sector;
  const std::uint64_t volume_end = std::min(desc.volume_bytes(), img.size());
  ClusterClaims mft_extent;
  for (const auto& run : live.mft_runs.runs) {
    if (!run.sparse()) mft_extent.add(*run.lcn, run.length);
  }

  constexpr std::uint64_t kChunk = 4 << 20;
  Bytes chunk;
  for (std::uint64_t base = 0; base < volume_end; base += kChunk) {
    const auto len = static_cast<std::size_t>(std::min(kChunk, volume_end - base));
    chunk = img.read(base, len);
    std::size_t pos = 0;
    while (pos + 4 <= len) {
      const std::uint64_t abs = base + pos;
      const std::uint64_t cluster = abs / cs;
      if (claims.contains(cluster) || mft_extent.contains(cluster) ||
          !has_file_magic(ByteView(chunk).subspan(pos, 4)) || abs + rs > volume_end) {
        pos += step;
        continue;
      }
      Bytes raw = pos + rs <= len ? Bytes(chunk.begin() + pos, chunk.begin() + pos + rs) : img.read(abs, rs);
      if (!apply_fixup(raw)) {
        ++out.corrupt_fixup;
        pos += step;
        continue;
      }
      MftRecord rec;
      try {
        rec.header = parse_record_header(raw);
      } catch (const CorruptError&) {
        ++out.bad_signature;
        pos += step;
        continue;
      }
      rec.bytes = std::move(raw);
      rec.index = rec.header.record_number.value_or(kUnknownIndex);
      rec.volume_offset = abs;
      rec.orphan = true;
      out.records.push_back(std::move(rec));
      pos += rs;
    }
  }
  return out;
}

std::string NtfsEntry::entry_id() const {
  if (record_index) return (orphan ? "mft-orphan:" : "mft:") + std::to_string(*record_index);
  return "mft@" + std::to_string(volume_offset);
}

NtfsEntry make_entry(const MftRecord& rec) {
  NtfsEntry e;
  if (rec.index != kUnknownIndex) e.record_index = rec.index;
  e.volume_offset = rec.volume_offset;
  e.in_use = rec.header.in_use();
  e.directory = rec.header.is_directory();
  e.orphan = rec.orphan;

  auto walk = parse_attributes(rec.bytes, rec.header);
  e.attributes_corrupt = walk.corrupt;
  if (walk.corrupt) e.confidence = Confidence::Heuristic;

  if (auto fn = file_name(walk)) {
    e.name = fn->name;
    e.parent_reference = fn->parent_reference;
    e.creation_time = fn->creation_time;
    e.modification_time = fn->modification_time;
  } else {
    e.name = e.record_index ? "record-" + std::to_string(*e.record_index)
                            : "record-at-" + std::to_string(e.volume_offset);
    e.confidence = Confidence::Heuristic;
  }
  if (auto si = standard_info(walk)) {
    e.creation_time = si->creation_time;
    e.modification_time = si->modification_time;
  }
  if (const auto* data = walk.find(kAttrData, true)) {
    if (data->resident) {
      e.data = data->value;
      e.real_size = data->value.size();
      e.allocated_size = data->value.size();
    } else if (data->start_vcn == 0) {
      e.real_size = data->real_size;
      e.allocated_size = data->allocated_size;
      e.compression_unit = data->compression_unit;
      try {
        e.data = decode_data_runs(data->run_list);
      } catch (const CorruptError&) {
        e.attributes_corrupt = true;
        e.confidence = Confidence::Heuristic;
      }
    }
  }
  return e;
}

std::vector<NtfsEntry> collect_entries(std::span<const MftRecord> records) {
  std::vector<NtfsEntry> out;
  for (const auto& rec : records) {
    if (rec.header.base_record != 0) continue;  // extension records
    if (rec.index != kUnknownIndex && rec.index < kFirstUserRecord) continue;
    NtfsEntry e = make_entry(rec);
    if (rec.index == kUnknownIndex && rec.orphan && e.name.starts_with("$")) continue;
    out.push_back(std::move(e));
  }
  return out;
}

RecoveredFile recover_ntfs_file(const VolumeImage& img, const VolumeDescriptor& desc,
                                const NtfsEntry& entry, ByteSink& sink,
                                const ClusterClaims* claims) {
  RecoveredFile rf;
  rf.name = entry.name;
  rf.fs = FsKind::Ntfs;
  rf.entry_id = entry.entry_id();
  rf.entry_offset = entry.volume_offset;
  rf.expected_size = entry.real_size;
  rf.confidence = entry.confidence;
  if (entry.orphan) rf.flags.emplace_back("orphan");

  RecoveryWriter writer(sink);
  if (const auto* resident = std::get_if<Bytes>(&entry.data)) {
    writer.write(*resident);
  } else if (const auto* runs = std::get_if<RunList>(&entry.data)) {
    const std::uint64_t cs = desc.cluster_size();
    std::uint64_t remaining = entry.real_size;
    const std::uint64_t extent_bytes = runs->total_clusters() * cs;
    if (remaining > extent_bytes) {
      remaining = extent_bytes;
      rf.flags.emplace_back("truncated");
    }
    bool overwritten = false;
    for (const auto& run : runs->runs) {
      if (remaining == 0) break;
      const std::uint64_t n = std::min(run.length, ceil_div(remaining, cs));
      if (run.sparse()) {
        rf.clusters.push_back({0, n, true});
        const std::uint64_t bytes = std::min(n * cs, remaining);
        writer.write_zeros(bytes);
        remaining -= bytes;
        continue;
      }
      const std::uint64_t first = *run.lcn;
      std::uint64_t readable = 0;
      if (first < desc.end_cluster()) readable = std::min(n, desc.end_cluster() - first);
      if (claims != nullptr && claims->overlaps(first, readable)) overwritten = true;
      if (readable > 0) rf.clusters.push_back({first, readable, false});
      constexpr std::uint64_t kBatch = 256;
      for (std::uint64_t done = 0; done < readable && remaining > 0; done += kBatch) {
        const std::uint64_t count = std::min(kBatch, readable - done);
        Bytes block = read_cluster_run(img, desc, first + done, count);
        const auto take = static_cast<std::size_t>(std::min<std::uint64_t>(block.size(), remaining));
        writer.write(ByteView(block.data(), take));
        remaining -= take;
      }
      if (readable < n) {
        rf.flags.emplace_back("partial");
        rf.confidence = Confidence::Heuristic;
        break;
      }
    }
    if (overwritten) rf.flags.emplace_back("overwritten-risk");
  } else if (entry.real_size > 0) {
    rf.flags.emplace_back("no-data");
  }

  rf.length = writer.length();
  rf.file_class = classify(writer.head(), entry.name);
  rf.sha256 = writer.finish();
  return rf;
}

std::string filetime_to_iso(std::uint64_t filetime) {
  if (filetime == 0) return {};
  constexpr std::int64_t kEpochDelta = 11644473600LL;
  const auto secs = static_cast<std::time_t>(static_cast<std::int64_t>(filetime / 10000000ULL) - kEpochDelta);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace remnant::ntfs
