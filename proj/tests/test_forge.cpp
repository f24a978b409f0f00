#include <gtest/gtest.h>

#include <fstream>

#include "helpers.hpp"
#include "remnant/pipeline.hpp"

using namespace remnant;
using namespace remnant::forge;

namespace {

struct Range {
  std::uint64_t begin;
  std::uint64_t end;
  bool contains(std::uint64_t off) const { return off >= begin && off < end; }
};

std::vector<std::uint64_t> changed_offsets(const Bytes& a, const Bytes& b) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) out.push_back(i);
  }
  return out;
}

std::vector<Range> data_ranges(const ForgedImage& img) {
  std::vector<Range> out;
  for (const auto& f : img.truth().files) {
    for (const auto& e : f.extents) {
      if (e.sparse) continue;
      out.push_back({img.cluster_offset(e.first), img.cluster_offset(e.first) + e.count * img.cluster_size()});
    }
  }
  return out;
}

bool inside_any(std::uint64_t off, const std::vector<Range>& ranges) {
  return std::any_of(ranges.begin(), ranges.end(), [&](const Range& r) { return r.contains(off); });
}

std::vector<FileSpec> mixed_files() {
  std::vector<FileSpec> files;
  std::uint64_t seed = 1;
  for (auto cls : kTableClasses) {
    files.push_back(test::file("F" + std::to_string(seed) + ".BIN", cls, 100 * seed * seed * seed, seed));
    ++seed;
  }
  files[2].fragment = true;
  return files;
}

}  // namespace

TEST(Content, DeterministicWithMagic) {
  for (auto cls : kTableClasses) {
    const auto a = generate_content(cls, 5000, 42);
    EXPECT_EQ(a, generate_content(cls, 5000, 42));
    EXPECT_NE(a, generate_content(cls, 5000, 43));
    EXPECT_EQ(classify(a, "noext"), cls) << to_string(cls);
    EXPECT_EQ(generate_content(cls, 3, 42), Bytes(a.begin(), a.begin() + 3));
  }
  EXPECT_TRUE(generate_content(FileClass::Image, 0, 1).empty());
}

TEST(Content, ClassifyFallsBackToExtension) {
  const Bytes junk(16, 0x11);
  EXPECT_EQ(classify(junk, "a.DOCX"), FileClass::Document);
  EXPECT_EQ(classify(junk, "song.flac"), FileClass::Audio);
  EXPECT_EQ(classify(junk, "README"), FileClass::Unknown);
  EXPECT_EQ(classify(Bytes{'M', 'Z'}, "x.pdf"), FileClass::Executable);
}

TEST(Content, ExpectedContentZeroesSparseRange) {
  FileTruth f;
  f.file_class = FileClass::Video;
  f.size = 4 * 512 + 10;
  f.seed = 3;
  f.sparse = std::make_pair(1ull, 2ull);
  const auto e = expected_content(f, 512);
  const auto g = generate_content(FileClass::Video, f.size, 3);
  ASSERT_EQ(e.size(), g.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (i >= 512 && i < 1536) {
      ASSERT_EQ(e[i], 0);
    } else {
      ASSERT_EQ(e[i], g[i]);
    }
  }
}

TEST(Build, Deterministic) {
  for (auto kind : {FsKind::Fat16, FsKind::Ntfs}) {
    const auto spec = test::corpus(kind, 32ull << 20, 8, mixed_files());
    const auto a = ForgedImage::build(spec);
    const auto b = ForgedImage::build(spec);
    EXPECT_EQ(a.bytes(), b.bytes());
    EXPECT_EQ(a.truth().image_sha256, sha256_hex(a.bytes()));
  }
}

TEST(Build, EmptyCorpus) {
  for (auto kind : {FsKind::Fat12, FsKind::Fat16, FsKind::Fat32, FsKind::Ntfs}) {
    const std::uint64_t vol = kind == FsKind::Fat32 ? 64ull << 20 : kind == FsKind::Fat16 ? 32ull << 20 : 4ull << 20;
    const std::uint32_t spc = kind == FsKind::Fat12 ? 8 : 1;
    const auto img = ForgedImage::build(test::corpus(kind, vol, spc, {}));
    auto v = img.view();
    EXPECT_EQ(detect_filesystem(v).kind, kind);
    EXPECT_TRUE(scan_volume(v, {}).entries.empty());
  }
}

TEST(Build, ContentMatchesTruthAtExtents) {
  for (auto kind : {FsKind::Fat32, FsKind::Ntfs}) {
    const auto img = ForgedImage::build(test::corpus(kind, 64ull << 20, 1, mixed_files()));
    for (const auto& f : img.truth().files) {
      if (f.resident) continue;
      Bytes got;
      for (const auto& e : f.extents) {
        got.insert(got.end(), img.bytes().begin() + static_cast<std::ptrdiff_t>(img.cluster_offset(e.first)),
                   img.bytes().begin() + static_cast<std::ptrdiff_t>(img.cluster_offset(e.first) + e.count * img.cluster_size()));
      }
      got.resize(f.size);
      EXPECT_EQ(sha256_hex(got), f.sha256) << f.name;
    }
  }
}

TEST(Build, Rejects) {
  EXPECT_THROW(ForgedImage::build(test::corpus(FsKind::Fat16, 1ull << 20, 1, {})), ForgeError);
  auto big = test::corpus(FsKind::Fat16, 32ull << 20, 4, {test::file("BIG.BIN", FileClass::Executable, 33ull << 20, 1)});
  EXPECT_THROW(ForgedImage::build(big), ForgeError);
  auto dup = test::corpus(FsKind::Fat16, 32ull << 20, 4,
                          {test::file("A.BIN", FileClass::Executable, 1, 1), test::file("A.BIN", FileClass::Executable, 1, 2)});
  EXPECT_THROW(ForgedImage::build(dup), ForgeError);
  auto img = ForgedImage::build(test::corpus(FsKind::Fat16, 32ull << 20, 4, {}));
  EXPECT_THROW(img.delete_metadata_only("missing"), ForgeError);
}

TEST(Build, NoDeletionRecoversNothing) {
  for (auto kind : {FsKind::Fat32, FsKind::Ntfs}) {
    const auto img = ForgedImage::build(test::corpus(kind, 64ull << 20, 1, mixed_files()));
    auto v = img.view();
    const auto scan = scan_volume(v, {});
    std::size_t files = 0;
    for (const auto& e : scan.entries) {
      EXPECT_FALSE(e.deleted);
      files += !e.directory;
    }
    EXPECT_EQ(files, 6u);
    EXPECT_TRUE(recover_volume(v, {}, std::nullopt).files.empty());
  }
}

TEST(Mutation, FatDeleteTouchesOnlyFatAndEntries) {
  auto img = ForgedImage::build(test::corpus(FsKind::Fat16, 32ull << 20, 4, mixed_files()));
  const Bytes before = img.bytes();
  const auto data = data_ranges(img);
  auto v = img.view();
  const auto desc = detect_filesystem(v);
  const Range fats{std::uint64_t(desc.reserved_sectors) * desc.bytes_per_sector,
                   std::uint64_t(desc.reserved_sectors + desc.fat_count * desc.sectors_per_fat) * desc.bytes_per_sector};
  std::vector<Range> entries;
  for (const auto& f : img.truth().files) entries.push_back({f.entry_offset, f.entry_offset + 1});

  img.delete_metadata_only("*");
  for (auto off : changed_offsets(before, img.bytes())) {
    EXPECT_FALSE(inside_any(off, data)) << off;
    EXPECT_TRUE(fats.contains(off) || inside_any(off, entries)) << off;
  }
}

TEST(Mutation, FatLongNameSlotsMarkedToo) {
  auto img = ForgedImage::build(test::corpus(FsKind::Fat32, 64ull << 20, 1,
                                             {test::file("a rather long file name.pdf", FileClass::Document, 10, 1)}));
  const Bytes before = img.bytes();
  const auto entry = img.truth().files[0].entry_offset;
  img.delete_metadata_only("*");
  std::size_t marked = 0;
  for (auto off : changed_offsets(before, img.bytes())) {
    if (off < entry && entry - off <= 32 * 20) {
      EXPECT_EQ((entry - off) % 32, 0u);
      EXPECT_EQ(img.bytes()[off], 0xE5);
      ++marked;
    }
  }
  EXPECT_GE(marked, 2u);
}

TEST(Mutation, NtfsDeleteTouchesOnlyRecordsAndBitmap) {
  auto img = ForgedImage::build(test::corpus(FsKind::Ntfs, 32ull << 20, 8, mixed_files()));
  const Bytes before = img.bytes();
  const auto truth = img.truth();
  const auto data = data_ranges(img);

  std::vector<Range> allowed;
  for (const auto& f : truth.files) allowed.push_back({f.entry_offset, f.entry_offset + truth.mft_record_size});
  auto v = img.view();
  const auto desc = detect_filesystem(v);
  const auto scan = ntfs::scan_mft(v, desc);
  for (const auto& r : scan.records) {
    if (r.index != 0 && r.index != 6) continue;  // $MFT bitmap attribute, $Bitmap
    allowed.push_back({r.volume_offset, r.volume_offset + truth.mft_record_size});
    for (const auto& attr : ntfs::parse_attributes(r.bytes, r.header).attributes) {
      if (attr.type != ntfs::kAttrData && attr.type != ntfs::kAttrBitmap) continue;
      if (attr.resident) continue;
      for (const auto& run : ntfs::decode_data_runs(attr.run_list).runs) {
        if (run.sparse()) continue;
        const auto at = *run.lcn * desc.cluster_size();
        allowed.push_back({at, at + run.length * desc.cluster_size()});
      }
    }
  }

  img.delete_metadata_only("*");
  const auto changed = changed_offsets(before, img.bytes());
  EXPECT_FALSE(changed.empty());
  for (auto off : changed) {
    EXPECT_FALSE(inside_any(off, data)) << off;
    EXPECT_TRUE(inside_any(off, allowed)) << off;
  }
}

TEST(Mutation, QuickFormatLeavesFileDataAlone) {
  for (auto kind : {FsKind::Fat16, FsKind::Fat32, FsKind::Ntfs}) {
    auto files = mixed_files();
    for (auto& f : files) f.directory = "DATA";
    auto img = ForgedImage::build(test::corpus(kind, kind == FsKind::Fat32 ? 64ull << 20 : 32ull << 20, kind == FsKind::Fat32 ? 1 : 4, files));
    const Bytes before = img.bytes();
    const auto data = data_ranges(img);
    img.quick_format();
    const auto changed = changed_offsets(before, img.bytes());
    EXPECT_FALSE(changed.empty());
    for (auto off : changed) ASSERT_FALSE(inside_any(off, data)) << to_string(kind) << " " << off;
    for (const auto& f : img.truth().files) EXPECT_EQ(f.state, FileState::Formatted);
  }
}

TEST(Mutation, FullOverwriteZeroesFileData) {
  for (auto kind : {FsKind::Fat32, FsKind::Ntfs}) {
    auto img = ForgedImage::build(test::corpus(kind, 64ull << 20, 1, mixed_files()));
    const auto data = data_ranges(img);
    img.full_overwrite();
    for (const auto& r : data) {
      for (auto off = r.begin; off < r.end; ++off) ASSERT_EQ(img.bytes()[off], 0) << off;
    }
    for (const auto& f : img.truth().files) EXPECT_EQ(f.state, FileState::Sanitized);
    auto v = img.view();
    EXPECT_EQ(detect_filesystem(v).kind, kind);
  }
}

TEST(Mutation, WriteAfterDeleteClaimsFreedClusters) {
  auto f = test::file("OLD.PDF", FileClass::Document, 8192, 1);
  f.at_cluster = 10;
  auto img = ForgedImage::build(test::corpus(FsKind::Fat16, 32ull << 20, 4, {f}));
  img.delete_metadata_only("OLD.PDF");
  auto g = test::file("NEW.PDF", FileClass::Document, 100, 2);
  g.at_cluster = 10;
  const auto& t = img.write_file(g);
  EXPECT_EQ(t.extents[0].first, 10u);
  EXPECT_EQ(img.truth().mutations, (std::vector<std::string>{"delete OLD.PDF", "write NEW.PDF"}));
}

TEST(Json, CorpusRoundTrip) {
  auto spec = test::corpus(FsKind::Ntfs, 32ull << 20, 8, mixed_files());
  spec.files[1].sparse = std::make_pair(0ull, 1ull);
  spec.files[3].reference_layout = true;
  spec.files[4].at_cluster = 900;
  const auto j = to_json(spec);
  EXPECT_EQ(to_json(corpus_from_json(j)), j);
  EXPECT_EQ(fs_kind_from_string("FAT32"), FsKind::Fat32);
  EXPECT_THROW(fs_kind_from_string("ext4"), Error);
}

TEST(Json, TruthRoundTripAndSave) {
  auto img = ForgedImage::build(test::corpus(FsKind::Fat32, 64ull << 20, 1, mixed_files()));
  img.delete_metadata_only("F1.BIN");
  const auto t = img.truth();
  const auto j = to_json(t);
  EXPECT_EQ(to_json(truth_from_json(j)), j);

  test::TempDir dir;
  img.save(dir / "v.img", dir / "v.truth.json");
  EXPECT_EQ(sha256_file(dir / "v.img"), t.image_sha256);
  std::ifstream in(dir / "v.truth.json");
  EXPECT_EQ(nlohmann::json::parse(in)["image_sha256"], t.image_sha256);
}

TEST(Json, Mutations) {
  auto img = ForgedImage::build(test::corpus(FsKind::Ntfs, 32ull << 20, 8, mixed_files()));
  apply_mutations(img, nlohmann::json::parse(R"([{"op":"delete","name":"F1.BIN"},
      {"op":"write","file":{"name":"N.ZIP","class":"compressed","size":300,"seed":4}}])"));
  EXPECT_EQ(img.truth().find("F1.BIN")->state, FileState::Deleted);
  EXPECT_NE(img.truth().find("N.ZIP"), nullptr);
  EXPECT_THROW(apply_mutations(img, nlohmann::json::parse(R"([{"op":"explode"}])")), ForgeError);
}

TEST(Table1, CorpusShape) {
  for (auto kind : {FsKind::Fat32, FsKind::Ntfs}) {
    const auto spec = table1_corpus(kind);
    EXPECT_EQ(spec.geometry.volume_bytes, 64ull << 20);
    ASSERT_EQ(spec.files.size(), 18u);
    for (auto cls : kTableClasses) {
      EXPECT_EQ(std::count_if(spec.files.begin(), spec.files.end(), [&](const FileSpec& f) { return f.file_class == cls; }), 3);
    }
    std::uint64_t lo = UINT64_MAX, hi = 0;
    for (const auto& f : spec.files) {
      lo = std::min(lo, f.size);
      hi = std::max(hi, f.size);
    }
    EXPECT_EQ(lo, 1u);
    EXPECT_EQ(hi, 4ull << 20);
  }
}
