#include <gtest/gtest.h>

#include <set>

#include "helpers.hpp"
#include "remnant/fat.hpp"
#include "remnant/report.hpp"

using namespace remnant;
using namespace remnant::fat;

namespace {

struct Deleted {
  VolumeImage view;
  VolumeDescriptor desc;
  FatTable table;
  std::vector<DeletedFatEntry> entries;
};

Deleted deleted_entries(const forge::ForgedImage& img, bool deep = false) {
  auto view = img.view();
  auto desc = detect_filesystem(view);
  auto scan = scan_fat_directories(view, desc, {deep});
  auto table = FatTable::read(view, desc);
  auto entries = find_deleted(scan.entries, desc);
  for (auto& e : entries) resolve_chain(e, table, desc);
  return {std::move(view), desc, std::move(table), std::move(entries)};
}

const DeletedFatEntry& by_cluster(const Deleted& d, std::uint32_t first) {
  for (const auto& e : d.entries) {
    if (e.first_cluster == first) return e;
  }
  throw std::runtime_error("no deleted entry at cluster " + std::to_string(first));
}

const forge::FileTruth& truth_at(const forge::GroundTruth& t, std::uint64_t entry_offset) {
  for (const auto& f : t.files) {
    if (f.entry_offset == entry_offset) return f;
  }
  throw std::runtime_error("no truth file at " + std::to_string(entry_offset));
}

forge::CorpusSpec fat16(std::vector<forge::FileSpec> files) {
  auto spec = test::corpus(FsKind::Fat16, 32ull << 20, 8, std::move(files));
  return spec;
}

}  // namespace

TEST(DirEntry, ParsesShortEntry) {
  Bytes slot(32, 0);
  std::memcpy(slot.data(), "\xE5" "EPORT  PDF", 11);
  slot[11] = kAttrArchive;
  store_le<std::uint16_t>(slot, 20, 0x0001);
  store_le<std::uint16_t>(slot, 26, 0x0005);
  store_le<std::uint32_t>(slot, 28, 10000);
  auto e = parse_dir_entry(slot, true);
  EXPECT_TRUE(e.deleted());
  EXPECT_EQ(e.first_cluster, 0x00010005u);
  EXPECT_EQ(e.size, 10000u);
  EXPECT_EQ(e.short_name(), "\xE5" "EPORT.PDF");
  EXPECT_EQ(parse_dir_entry(slot, false).first_cluster, 5u);
}

TEST(DirEntry, Kinds) {
  Bytes slot(32, 0);
  std::memcpy(slot.data(), "A          ", 11);
  slot[11] = kAttrLongName;
  EXPECT_TRUE(parse_dir_entry(slot, false).is_long_name());
  EXPECT_FALSE(parse_dir_entry(slot, false).is_directory());
  slot[11] = kAttrDirectory;
  EXPECT_TRUE(parse_dir_entry(slot, false).is_directory());
  slot[11] = kAttrVolumeLabel;
  EXPECT_TRUE(parse_dir_entry(slot, false).is_volume_label());
  slot[0] = 0;
  EXPECT_TRUE(parse_dir_entry(slot, false).end_marker());
}

TEST(Chain, ContiguousExact) {
  auto f = test::file("REPORT.PDF", FileClass::Document, 10000, 3);
  f.at_cluster = 5;
  auto img = forge::ForgedImage::build(fat16({f}));
  img.delete_metadata_only("REPORT.PDF");
  auto d = deleted_entries(img);
  const auto& e = by_cluster(d, 5);
  EXPECT_EQ(e.chain, (std::vector<std::uint64_t>{5, 6, 7}));
  EXPECT_EQ(e.confidence, Confidence::Exact);
  MemorySink sink;
  auto rf = recover_fat_file(d.view, d.desc, e, sink);
  EXPECT_EQ(rf.length, 10000u);
  EXPECT_EQ(rf.sha256, img.truth().files[0].sha256);
  EXPECT_TRUE(rf.flags.empty());
}

TEST(Chain, SkipsClustersOwnedByLiveFiles) {
  auto f = test::file("REPORT.PDF", FileClass::Document, 10000, 3);
  f.at_cluster = 5;
  auto img = forge::ForgedImage::build(fat16({f}));
  img.delete_metadata_only("REPORT.PDF");
  auto g = test::file("NEW.JPG", FileClass::Image, 100, 4);
  g.at_cluster = 6;
  img.write_file(g);
  auto d = deleted_entries(img);
  const auto& e = by_cluster(d, 5);
  EXPECT_EQ(e.chain, (std::vector<std::uint64_t>{5, 7, 8}));
  EXPECT_EQ(e.confidence, Confidence::ContiguousHeuristic);
  MemorySink sink;
  auto rf = recover_fat_file(d.view, d.desc, e, sink);
  EXPECT_TRUE(rf.has_flag("overwritten-risk"));
}

TEST(Chain, FirstClusterReusedIsFragmentedUnknown) {
  auto f = test::file("OLD.MP3", FileClass::Audio, 10000, 3);
  f.at_cluster = 5;
  auto img = forge::ForgedImage::build(fat16({f}));
  img.delete_metadata_only("OLD.MP3");
  auto g = test::file("NEW.ZIP", FileClass::Compressed, 100, 4);
  g.at_cluster = 5;
  img.write_file(g);
  auto d = deleted_entries(img);
  EXPECT_EQ(by_cluster(d, 5).confidence, Confidence::FragmentedUnknown);
}

TEST(Chain, ZeroAndOneByte) {
  auto z = test::file("EMPTY.TXT", FileClass::Document, 0, 1);
  auto one = test::file("ONE.EXE", FileClass::Executable, 1, 2);
  one.at_cluster = 40;
  auto img = forge::ForgedImage::build(fat16({z, one}));
  img.delete_metadata_only("*");
  auto d = deleted_entries(img);
  ASSERT_EQ(d.entries.size(), 2u);
  for (const auto& e : d.entries) {
    MemorySink sink;
    auto rf = recover_fat_file(d.view, d.desc, e, sink);
    if (e.size == 0) {
      EXPECT_TRUE(e.chain.empty());
      EXPECT_EQ(rf.length, 0u);
    } else {
      EXPECT_EQ(e.chain.size(), 1u);
      EXPECT_EQ(sink.bytes(), forge::generate_content(FileClass::Executable, 1, 2));
    }
  }
}

TEST(Chain, TruncatedAtHeapEnd) {
  auto img = forge::ForgedImage::build(fat16({}));
  auto view = img.view();
  auto desc = detect_filesystem(view);
  DeletedFatEntry e;
  e.first_cluster = static_cast<std::uint32_t>(desc.end_cluster() - 1);
  e.size = 3 * desc.cluster_size();
  auto h = reconstruct_chain(e, FatTable::all_free(desc), desc);
  EXPECT_EQ(h.clusters.size(), 1u);
  EXPECT_TRUE(h.truncated);
}

TEST(ChainProperty, LengthIsCeilOfSize) {
  std::mt19937_64 rng(5);
  for (const auto kind : {FsKind::Fat12, FsKind::Fat16, FsKind::Fat32}) {
    const std::uint64_t vol = kind == FsKind::Fat12 ? 4ull << 20 : kind == FsKind::Fat16 ? 32ull << 20 : 128ull << 20;
    const std::uint32_t spc = kind == FsKind::Fat32 ? 1 : 4;
    std::vector<forge::FileSpec> files;
    for (int i = 0; i < 12; ++i) {
      files.push_back(test::file("F" + std::to_string(i) + ".BIN", FileClass::Executable, rng() % 20000, rng()));
    }
    auto img = forge::ForgedImage::build(test::corpus(kind, vol, spc, files));
    img.delete_metadata_only("*");
    auto d = deleted_entries(img);
    const auto truth = img.truth();
    ASSERT_EQ(d.entries.size(), files.size());
    const auto cs = d.desc.cluster_size();
    for (const auto& e : d.entries) {
      EXPECT_EQ(e.chain.size(), (e.size + cs - 1) / cs) << e.name;
      MemorySink sink;
      auto rf = recover_fat_file(d.view, d.desc, e, sink);
      EXPECT_EQ(rf.length, e.size);
      EXPECT_EQ(rf.sha256, truth_at(truth, e.entry.volume_offset).sha256) << e.name;
    }
  }
}

// A deleted 8.3 entry keeps everything but its first character.
TEST(DeleteProperty, NameSurvivesModuloFirstChar) {
  std::mt19937_64 rng(9);
  const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  std::vector<forge::FileSpec> files;
  std::set<std::string> names;
  while (names.size() < 20) {
    std::string base;
    const int len = 1 + static_cast<int>(rng() % 8);
    for (int k = 0; k < len; ++k) base += alphabet[rng() % alphabet.size()];
    names.insert(base + ".DAT");
  }
  for (const auto& n : names) files.push_back(test::file(n, FileClass::Executable, 1 + rng() % 5000, rng()));
  auto img = forge::ForgedImage::build(fat16(files));
  img.delete_metadata_only("*");
  auto d = deleted_entries(img);
  const auto truth = img.truth();
  ASSERT_EQ(d.entries.size(), names.size());
  for (const auto& e : d.entries) {
    ASSERT_FALSE(e.name.empty());
    EXPECT_EQ(e.name[0], '_');
    const auto& t = truth_at(truth, e.entry.volume_offset);
    EXPECT_EQ(e.name.substr(1), t.name.substr(1));
    EXPECT_EQ(e.size, t.size);
  }
}

TEST(LongNames, SurviveDeletion) {
  auto img = forge::ForgedImage::build(fat16({test::file("Quarterly report 2019.pdf", FileClass::Document, 5000, 1)}));
  img.delete_metadata_only("*");
  auto d = deleted_entries(img);
  ASSERT_EQ(d.entries.size(), 1u);
  EXPECT_EQ(d.entries[0].name, "Quarterly report 2019.pdf");
}

TEST(Fragmented, RecoveredBytesMismatchTruth) {
  auto f = test::file("SPLIT.MP4", FileClass::Video, 6 * 4096, 7);
  f.fragment = true;
  auto img = forge::ForgedImage::build(fat16({f}));
  img.delete_metadata_only("*");
  const auto truth = img.truth();
  ASSERT_GE(truth.files[0].extents.size(), 2u);

  auto view = img.view();
  auto rec = recover_volume(view, {}, std::nullopt);
  ASSERT_EQ(rec.files.size(), 1u);
  EXPECT_NE(rec.files[0].sha256, truth.files[0].sha256);
  auto rows = report::recovery_files(rec, &truth);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0]["byte_identical"], false);
  EXPECT_EQ(rows[0]["listed"], true);
}

TEST(Subdirectories, DeletedFilesFoundBelowRoot) {
  auto f = test::file("DEEP.PDF", FileClass::Document, 3000, 2);
  f.directory = "DATA";
  auto img = forge::ForgedImage::build(fat16({f, test::file("TOP.JPG", FileClass::Image, 100, 3)}));
  img.delete_metadata_only("DEEP.PDF");
  auto d = deleted_entries(img);
  ASSERT_EQ(d.entries.size(), 1u);
  EXPECT_EQ(d.entries[0].path, "/DATA/");
}

TEST(QuickFormat, DeepCarveIsSupersetOfLiveWalk) {
  std::vector<forge::FileSpec> files;
  for (int i = 0; i < 6; ++i) {
    auto f = test::file("FILE" + std::to_string(i) + ".BIN", FileClass::Executable, 2000 + i * 3000, i);
    f.directory = "DATA";
    files.push_back(f);
  }
  files.push_back(test::file("ROOT.PDF", FileClass::Document, 4000, 99));
  auto img = forge::ForgedImage::build(fat16(files));
  img.delete_metadata_only("FILE2.BIN");

  auto view = img.view();
  auto desc = detect_filesystem(view);
  const auto live = scan_fat_directories(view, desc, {false});
  const auto deep = scan_fat_directories(view, desc, {true});
  std::set<std::uint64_t> deep_offsets;
  for (const auto& l : deep.entries) deep_offsets.insert(l.entry.volume_offset);
  for (const auto& l : live.entries) EXPECT_TRUE(deep_offsets.count(l.entry.volume_offset)) << l.path;

  img.quick_format();
  auto after = deleted_entries(img, false);
  EXPECT_TRUE(after.entries.empty());
  auto carved = deleted_entries(img, true);
  EXPECT_EQ(carved.entries.size(), 6u);
  for (const auto& e : carved.entries) {
    if (e.directory) continue;
    MemorySink sink;
    auto rf = recover_fat_file(carved.view, carved.desc, e, sink);
    EXPECT_TRUE(rf.has_flag("orphan"));
  }
}

TEST(FatTable, ChainStopsAtLoop) {
  auto img = forge::ForgedImage::build(fat16({}));
  Bytes b = img.bytes();
  auto v0 = VolumeImage::from_bytes(b);
  auto desc = detect_filesystem(v0);
  const auto fat_off = desc.reserved_sectors * desc.bytes_per_sector;
  store_le<std::uint16_t>(b, fat_off + 2 * 10, 11);
  store_le<std::uint16_t>(b, fat_off + 2 * 11, 10);
  auto v = VolumeImage::from_bytes(b);
  auto table = FatTable::read(v, desc);
  EXPECT_EQ(table.chain(10), (std::vector<std::uint64_t>{10, 11}));
  EXPECT_EQ(table.state(10), FatTable::State::Next);
  EXPECT_EQ(table.state(12), FatTable::State::Free);
}

TEST(DosTime, Iso) {
  EXPECT_EQ(dos_datetime_to_iso(0, 0), "");
  // 2019-06-15 13:45:30
  const std::uint16_t date = ((2019 - 1980) << 9) | (6 << 5) | 15;
  const std::uint16_t time = (13 << 11) | (45 << 5) | 15;
  EXPECT_EQ(dos_datetime_to_iso(date, time), "2019-06-15T13:45:30");
}
