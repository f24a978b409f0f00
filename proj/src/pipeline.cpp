#include "remnant/pipeline.hpp"

#include <atomic>
#include <functional>
#include <map>
#include <thread>

#include "remnant/fat.hpp"
#include "remnant/ntfs.hpp"

namespace remnant {

FsChoice fs_choice_from_string(std::string_view s) {
  if (s == "auto") return FsChoice::Auto;
  if (s == "fat") return FsChoice::Fat;
  if (s == "ntfs") return FsChoice::Ntfs;
  throw Error("unknown filesystem choice '" + std::string(s) + "'");
}

VolumeDescriptor detect(const VolumeImage& img, FsChoice fs) {
  auto desc = detect_filesystem(img);
  if (fs == FsChoice::Fat && !is_fat(desc.kind)) throw FormatError("not a FAT volume");
  if (fs == FsChoice::Ntfs && desc.kind != FsKind::Ntfs) throw FormatError("not an NTFS volume");
  return desc;
}

namespace {

struct NtfsView {
  ntfs::MftScan live;
  ntfs::MftScan carved;
  ntfs::ClusterClaims claims;
  std::vector<ntfs::NtfsEntry> entries;
};

NtfsView ntfs_view(const VolumeImage& img, const VolumeDescriptor& desc, bool deep) {
  NtfsView v;
  v.live = ntfs::scan_mft(img, desc);
  v.claims = ntfs::live_claims(v.live, desc);
  std::vector<ntfs::MftRecord> records = v.live.records;
  if (deep) {
    v.carved = ntfs::carve_orphan_records(img, desc, v.live, v.claims);
    records.insert(records.end(), v.carved.records.begin(), v.carved.records.end());
  }
  v.entries = ntfs::collect_entries(records);
  return v;
}

struct FatView {
  fat::FatScan scan;
  fat::FatTable table = fat::FatTable::all_free({});
};

FatView fat_view(const VolumeImage& img, const VolumeDescriptor& desc, bool deep) {
  FatView v;
  v.scan = fat::scan_fat_directories(img, desc, {deep});
  v.table = v.scan.fat_readable ? fat::FatTable::read(img, desc) : fat::FatTable::all_free(desc);
  return v;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

ScanResult scan_volume(const VolumeImage& img, const PipelineOptions& opts) {
  ScanResult out;
  out.desc = detect(img, opts.fs);
  const auto& desc = out.desc;
  if (desc.kind == FsKind::Ntfs) {
    auto v = ntfs_view(img, desc, opts.deep);
    out.carved = v.carved.records.size();
    if (v.live.corrupt_fixup > 0) {
      out.warnings.push_back(std::to_string(v.live.corrupt_fixup) + " MFT record(s) failed the fixup check");
    }
    for (const auto& e : v.entries) {
      EntryRow r;
      r.entry_id = e.entry_id();
      r.path = "/";
      r.name = e.name;
      r.deleted = e.deleted();
      r.directory = e.directory;
      r.orphan = e.orphan;
      r.size = e.real_size;
      r.created = ntfs::filetime_to_iso(e.creation_time);
      r.modified = ntfs::filetime_to_iso(e.modification_time);
      r.confidence = e.confidence;
      r.entry_offset = e.volume_offset;
      out.entries.push_back(std::move(r));
    }
    return out;
  }

  auto v = fat_view(img, desc, opts.deep);
  out.carved = v.scan.carved_directories;
  out.warnings = v.scan.warnings;
  auto deleted = fat::find_deleted(v.scan.entries, desc);
  std::map<std::uint64_t, const fat::DeletedFatEntry*> by_offset;
  for (const auto& d : deleted) by_offset[d.entry.volume_offset] = &d;
  for (const auto& [path, e] : v.scan.entries) {
    if (e.is_long_name() || e.is_dot() || e.is_volume_label() || e.end_marker()) continue;
    EntryRow r;
    r.path = path;
    r.directory = e.is_directory();
    r.orphan = e.orphaned;
    r.size = e.size;
    r.created = fat::dos_datetime_to_iso(e.create_date, e.create_time);
    r.modified = fat::dos_datetime_to_iso(e.write_date, e.write_time);
    r.entry_offset = e.volume_offset;
    r.entry_id = "fat@" + std::to_string(e.volume_offset);
    if (auto it = by_offset.find(e.volume_offset); it != by_offset.end()) {
      fat::DeletedFatEntry d = *it->second;
      fat::resolve_chain(d, v.table, desc);
      r.deleted = true;
      r.name = d.name;
      r.confidence = d.confidence;
    } else {
      r.name = e.long_name.empty() ? e.short_name() : e.long_name;
    }
    out.entries.push_back(std::move(r));
  }
  return out;
}

RecoveryResult recover_volume(const VolumeImage& img, const PipelineOptions& opts,
                              const std::optional<std::filesystem::path>& out_dir) {
  RecoveryResult out;
  out.desc = detect(img, opts.fs);
  const auto& desc = out.desc;
  if (out_dir) std::filesystem::create_directories(*out_dir);

  std::vector<std::function<RecoveredFile(ByteSink&)>> tasks;
  std::vector<std::pair<std::string, std::string>> labels;  // entry id, name
  NtfsView nv;
  FatView fv;
  std::vector<fat::DeletedFatEntry> fat_deleted;
  if (desc.kind == FsKind::Ntfs) {
    nv = ntfs_view(img, desc, opts.deep);
    for (const auto& e : nv.entries) {
      if (!e.deleted() || e.directory) continue;
      labels.emplace_back(e.entry_id(), e.name);
      tasks.emplace_back([&img, &desc, &nv, &e](ByteSink& sink) {
        return ntfs::recover_ntfs_file(img, desc, e, sink, &nv.claims);
      });
    }
  } else {
    fv = fat_view(img, desc, opts.deep);
    out.warnings = fv.scan.warnings;
    for (auto& d : fat::find_deleted(fv.scan.entries, desc)) {
      if (d.directory) continue;
      fat::resolve_chain(d, fv.table, desc);
      fat_deleted.push_back(std::move(d));
    }
    for (const auto& d : fat_deleted) {
      labels.emplace_back(d.entry_id(), d.name);
      tasks.emplace_back([&img, &desc, &d](ByteSink& sink) { return fat::recover_fat_file(img, desc, d, sink); });
    }
  }

  std::vector<std::optional<RecoveredFile>> results(tasks.size());
  std::vector<std::string> errors(tasks.size());
  parallel_for(tasks.size(), opts.jobs, [&](std::size_t i) {
    try {
      if (out_dir) {
        const auto path = *out_dir / output_file_name(labels[i].first, labels[i].second);
        RecoveredFile rf;
        {
          FileSink sink(path);
          rf = tasks[i](sink);
        }
        rf.output_path = path;
        results[i] = std::move(rf);
      } else {
        NullSink sink;
        results[i] = tasks[i](sink);
      }
    } catch (const std::exception& e) {
      errors[i] = labels[i].first + ": " + e.what();
    }
  });
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (results[i]) out.files.push_back(std::move(*results[i]));
    if (!errors[i].empty()) out.errors.push_back(std::move(errors[i]));
  }
  return out;
}

}  // namespace remnant
