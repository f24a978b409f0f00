#include <gtest/gtest.h>

#include <fstream>

#include "helpers.hpp"
#include "remnant/volume.hpp"

using namespace remnant;
using test::TempDir;

namespace {

void write_file(const std::filesystem::path& p, const Bytes& b) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST(VolumeImage, OpensWholeFile) {
  TempDir dir;
  write_file(dir / "a.img", Bytes(64 * 1024, 0));
  auto img = VolumeImage::open(dir / "a.img");
  EXPECT_EQ(img.size(), 64u * 1024);
  EXPECT_TRUE(img.read_only());
}

TEST(VolumeImage, RejectsBadOpen) {
  TempDir dir;
  EXPECT_THROW(VolumeImage::open(dir / "missing.img"), ImageError);
  write_file(dir / "a.img", Bytes(4096, 0));
  try {
    VolumeImage::open(dir / "a.img", 4096);
    FAIL() << "expected an error";
  } catch (const ImageError& e) {
    EXPECT_NE(std::string(e.what()).find("offset beyond end"), std::string::npos);
  }
  write_file(dir / "tiny.img", Bytes(100, 0));
  EXPECT_THROW(VolumeImage::open(dir / "tiny.img"), ImageError);
}

TEST(VolumeImage, ReadsAreBoundsChecked) {
  auto img = VolumeImage::from_bytes(Bytes(1024, 7));
  EXPECT_EQ(img.read(1000, 24).size(), 24u);
  EXPECT_THROW(img.read(1000, 25), RangeError);
  EXPECT_THROW(img.read(5000, 1), RangeError);
}

TEST(VolumeImage, BaseOffsetShiftsReads) {
  Bytes b(2048, 0);
  b[1024] = 0xAB;
  auto img = VolumeImage::from_bytes(b, 1024);
  EXPECT_EQ(img.size(), 1024u);
  EXPECT_EQ(img.read(0, 1)[0], 0xAB);
}

TEST(Detect, ZeroSectorIsUnrecognized) {
  auto img = VolumeImage::from_bytes(Bytes(512, 0));
  try {
    detect_filesystem(img);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("not a recognized volume"), std::string::npos);
  }
}

TEST(Detect, Fat32BootSignature) {
  auto img = forge::ForgedImage::build(test::corpus(FsKind::Fat32, 64ull << 20, 1, {}));
  auto v = img.view();
  auto sig = v.read(510, 2);
  EXPECT_EQ(sig[0], 0x55);
  EXPECT_EQ(sig[1], 0xAA);
  auto d = detect_filesystem(v);
  EXPECT_EQ(d.kind, FsKind::Fat32);
  EXPECT_EQ(d.cluster_size(), 512u);
}

TEST(Detect, NtfsRecordSize) {
  auto img = forge::ForgedImage::build(test::corpus(FsKind::Ntfs, 16ull << 20, 8, {}));
  auto d = detect_filesystem(img.view());
  EXPECT_EQ(d.kind, FsKind::Ntfs);
  EXPECT_EQ(d.mft_record_size, 1024u);
  EXPECT_EQ(d.cluster_size(), 4096u);
  EXPECT_EQ(d.mft_lcn, img.truth().mft_lcn);
}

TEST(Detect, CorruptGeometry) {
  auto img = forge::ForgedImage::build(test::corpus(FsKind::Fat16, 16ull << 20, 4, {}));
  Bytes b = img.bytes();
  b[13] = 3;  // sectors per cluster not a power of two
  EXPECT_THROW(detect_filesystem(VolumeImage::from_bytes(b)), FormatError);
}

// detect_filesystem(forge(params)) == params over a sector/cluster size grid.
TEST(DetectProperty, GeometryGridRoundTrips) {
  struct Case {
    FsKind kind;
    std::uint64_t volume;
  };
  const Case cases[] = {{FsKind::Fat12, 4ull << 20}, {FsKind::Fat16, 32ull << 20},
                        {FsKind::Fat32, 128ull << 20}, {FsKind::Ntfs, 16ull << 20}};
  std::map<FsKind, int> covered;
  for (const auto& c : cases) {
    for (std::uint32_t bps : {512u, 1024u, 2048u, 4096u}) {
      for (std::uint32_t spc = 1; spc <= 128; spc *= 2) {
        if (std::uint64_t(bps) * spc > 64 * 1024) continue;
        auto spec = test::corpus(c.kind, c.volume, spc, {test::file("A.BIN", FileClass::Executable, 5000, 1)});
        spec.geometry.bytes_per_sector = bps;
        std::optional<forge::ForgedImage> img;
        try {
          img = forge::ForgedImage::build(spec);
        } catch (const forge::ForgeError&) {
          continue;  // combination does not produce this FAT type
        }
        const auto truth = img->truth();
        const auto d = detect_filesystem(img->view());
        SCOPED_TRACE(std::string(to_string(c.kind)) + " bps=" + std::to_string(bps) + " spc=" + std::to_string(spc));
        EXPECT_EQ(d.kind, c.kind);
        EXPECT_EQ(d.bytes_per_sector, bps);
        EXPECT_EQ(d.cluster_size(), truth.cluster_size);
        if (c.kind == FsKind::Ntfs) {
          EXPECT_EQ(d.mft_lcn, truth.mft_lcn);
          EXPECT_EQ(d.mft_record_size, truth.mft_record_size);
        }
        // the file's first cluster holds its content
        const auto& f = truth.files.at(0);
        const auto first = read_cluster_run(img->view(), d, f.extents.at(0).first, 1);
        const auto want = forge::generate_content(f.file_class, f.size, f.seed);
        EXPECT_TRUE(std::equal(want.begin(), want.begin() + std::min<std::size_t>(want.size(), first.size()),
                               first.begin()));
        ++covered[c.kind];
      }
    }
  }
  // FAT32 needs >= 65525 clusters, so only small clusters fit at this size
  for (const auto& c : cases) EXPECT_GE(covered[c.kind], c.kind == FsKind::Fat32 ? 2 : 4) << to_string(c.kind);
}

TEST(ClusterOffset, Fat32Examples) {
  VolumeDescriptor d;
  d.kind = FsKind::Fat32;
  d.bytes_per_sector = 512;
  d.sectors_per_cluster = 8;
  d.first_data_sector = 2048;
  d.cluster_count = 100000;
  EXPECT_EQ(cluster_offset(d, 2), 1'048'576u);
  EXPECT_EQ(cluster_offset(d, 5), 1'060'864u);
  EXPECT_EQ(cluster_offset(d, 5), test::oracle_fat_cluster_offset(2048, 512, 8, 5));
  EXPECT_THROW(cluster_offset(d, 1), RangeError);
  EXPECT_THROW(cluster_offset(d, 100002), RangeError);
}

TEST(ClusterOffset, NtfsStartsAtVolumeByteZero) {
  VolumeDescriptor d;
  d.kind = FsKind::Ntfs;
  d.sectors_per_cluster = 8;
  d.total_sectors = 1000;
  EXPECT_EQ(cluster_offset(d, 0), 0u);
  EXPECT_EQ(cluster_offset(d, 3), 3u * 4096);
}

TEST(ClusterOffset, MonotoneWithClusterSizeSteps) {
  auto img = forge::ForgedImage::build(test::corpus(FsKind::Fat16, 16ull << 20, 4, {}));
  auto d = detect_filesystem(img.view());
  for (std::uint64_t c = d.first_cluster(); c + 1 < d.end_cluster(); ++c) {
    ASSERT_EQ(cluster_offset(d, c + 1) - cluster_offset(d, c), d.cluster_size());
  }
}

TEST(ReadClusters, ConcatenatesInOrder) {
  auto spec = test::corpus(FsKind::Fat16, 16ull << 20, 4,
                           {test::file("A.BIN", FileClass::Executable, 2048, 1),
                            test::file("B.BIN", FileClass::Executable, 2048, 2)});
  auto img = forge::ForgedImage::build(spec);
  auto v = img.view();
  auto d = detect_filesystem(v);
  const auto t = img.truth();
  const std::uint64_t a = t.files[0].extents[0].first, b = t.files[1].extents[0].first;
  EXPECT_TRUE(read_clusters(v, d, {}).empty());
  const std::vector<std::uint64_t> ab = {a, b}, ba = {b, a};
  auto x = read_clusters(v, d, ab);
  auto y = read_clusters(v, d, ba);
  ASSERT_EQ(x.size(), 2u * d.cluster_size());
  EXPECT_TRUE(std::equal(x.begin(), x.begin() + 2048, y.begin() + 2048));
  EXPECT_EQ(sha256_hex(ByteView(x).first(2048)), t.files[0].sha256);
  const std::vector<std::uint64_t> bad = {a, d.end_cluster()};
  EXPECT_THROW(read_clusters(v, d, bad), RangeError);
}
