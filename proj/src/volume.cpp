#include "remnant/volume.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <variant>

namespace remnant {

namespace {

constexpr std::uint64_t kMinImageSize = 512;
constexpr std::array<std::uint8_t, 8> kNtfsOem = {'N', 'T', 'F', 'S', ' ', ' ', ' ', ' '};

class FileHandle {
 public:
  explicit FileHandle(int fd) : fd_(fd) {}
  ~FileHandle() {
    if (fd_ >= 0) ::close(fd_);
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
  int get() const { return fd_; }

 private:
  int fd_;
};

}  // namespace

std::string_view to_string(FsKind kind) {
  switch (kind) {
    case FsKind::Fat12: return "FAT12";
    case FsKind::Fat16: return "FAT16";
    case FsKind::Fat32: return "FAT32";
    case FsKind::Ntfs: return "NTFS";
  }
  return "?";
}

bool is_fat(FsKind kind) { return kind != FsKind::Ntfs; }

struct VolumeImage::Source {
  std::optional<std::filesystem::path> path;
  std::uint64_t size = 0;
  std::variant<std::shared_ptr<FileHandle>, Bytes> backing;
};

VolumeImage::VolumeImage(std::shared_ptr<const Source> src, std::uint64_t base_offset)
    : src_(std::move(src)), base_offset_(base_offset) {}

VolumeImage VolumeImage::open(const std::filesystem::path& path, std::uint64_t base_offset) {
  int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) {
    throw ImageError("cannot open image " + path.string() + ": " + std::strerror(errno));
  }
  auto handle = std::make_shared<FileHandle>(fd);
  struct stat st {};
  if (::fstat(fd, &st) != 0) throw ImageError("cannot stat image " + path.string());
  std::uint64_t size = 0;
  if (S_ISREG(st.st_mode)) {
    size = static_cast<std::uint64_t>(st.st_size);
  } else {
    off_t end = ::lseek(fd, 0, SEEK_END);
    if (end < 0) throw ImageError("cannot size image " + path.string());
    size = static_cast<std::uint64_t>(end);
  }
  if (base_offset >= size) throw ImageError("offset beyond end");
  if (size - base_offset < kMinImageSize) throw ImageError("image smaller than 512 bytes");

  auto src = std::make_shared<Source>();
  src->path = path;
  src->size = size;
  src->backing = std::move(handle);
  return VolumeImage(std::move(src), base_offset);
}

VolumeImage VolumeImage::from_bytes(Bytes data, std::uint64_t base_offset) {
  if (base_offset >= data.size()) throw ImageError("offset beyond end");
  if (data.size() - base_offset < kMinImageSize) throw ImageError("image smaller than 512 bytes");
  auto src = std::make_shared<Source>();
  src->size = data.size();
  src->backing = std::move(data);
  return VolumeImage(std::move(src), base_offset);
}

std::uint64_t VolumeImage::source_size() const { return src_->size; }

const std::optional<std::filesystem::path>& VolumeImage::path() const { return src_->path; }

void VolumeImage::read(std::uint64_t offset, std::span<std::uint8_t> out) const {
  if (offset > size() || size() - offset < out.size()) {
    throw RangeError("read beyond end of image at offset " + std::to_string(offset));
  }
  const std::uint64_t abs = base_offset_ + offset;
  if (const auto* mem = std::get_if<Bytes>(&src_->backing)) {
    std::memcpy(out.data(), mem->data() + abs, out.size());
    return;
  }
  const int fd = std::get<std::shared_ptr<FileHandle>>(src_->backing)->get();
  std::size_t done = 0;
  while (done < out.size()) {
    ssize_t n = ::pread(fd, out.data() + done, out.size() - done, static_cast<off_t>(abs + done));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw ImageError("short read from image at offset " + std::to_string(abs + done));
    done += static_cast<std::size_t>(n);
  }
}

Bytes VolumeImage::read(std::uint64_t offset, std::size_t length) const {
  Bytes out(length);
  read(offset, out);
  return out;
}

std::uint64_t VolumeDescriptor::end_cluster() const {
  if (is_fat(kind)) return static_cast<std::uint64_t>(cluster_count) + 2;
  return total_sectors / sectors_per_cluster;
}

namespace {

bool valid_sector_size(std::uint32_t bps) {
  return bps == 512 || bps == 1024 || bps == 2048 || bps == 4096;
}

bool valid_cluster_factor(std::uint32_t spc) { return spc >= 1 && spc <= 128 && is_power_of_two(spc); }

VolumeDescriptor parse_ntfs(ByteView boot, std::uint64_t available) {
  VolumeDescriptor d;
  d.kind = FsKind::Ntfs;
  d.bytes_per_sector = load_le<std::uint16_t>(boot, 0x0B);
  const std::uint8_t spc_raw = boot[0x0D];
  if (spc_raw > 0x80) {
    const unsigned shift = 256u - spc_raw;
    d.sectors_per_cluster = shift < 32 ? (1u << shift) : 0;
  } else {
    d.sectors_per_cluster = spc_raw;
  }
  d.total_sectors = load_le<std::uint64_t>(boot, 0x28);
  d.mft_lcn = load_le<std::uint64_t>(boot, 0x30);
  d.mft_mirror_lcn = load_le<std::uint64_t>(boot, 0x38);
  const auto per_record = load_le<std::int8_t>(boot, 0x40);

  if (!valid_sector_size(d.bytes_per_sector) || !valid_cluster_factor(d.sectors_per_cluster)) {
    throw FormatError("corrupt boot record");
  }
  if (per_record < 0) {
    const int shift = -per_record;
    if (shift > 20) throw FormatError("corrupt boot record");
    d.mft_record_size = 1u << shift;
  } else {
    d.mft_record_size = static_cast<std::uint32_t>(per_record) * d.cluster_size();
  }
  if (!is_power_of_two(d.mft_record_size) || d.mft_record_size < 512) {
    throw FormatError("corrupt boot record");
  }
  if (d.total_sectors == 0 || d.total_sectors > available / d.bytes_per_sector) {
    throw FormatError("corrupt boot record");
  }
  if (d.mft_lcn >= d.end_cluster()) throw FormatError("corrupt boot record");
  return d;
}

VolumeDescriptor parse_fat(ByteView boot, std::uint64_t available) {
  VolumeDescriptor d;
  d.bytes_per_sector = load_le<std::uint16_t>(boot, 0x0B);
  d.sectors_per_cluster = boot[0x0D];
  d.reserved_sectors = load_le<std::uint16_t>(boot, 0x0E);
  d.fat_count = boot[0x10];
  d.root_entry_count = load_le<std::uint16_t>(boot, 0x11);
  const std::uint32_t total16 = load_le<std::uint16_t>(boot, 0x13);
  const std::uint32_t fatsz16 = load_le<std::uint16_t>(boot, 0x16);
  const std::uint32_t total32 = load_le<std::uint32_t>(boot, 0x20);
  const std::uint32_t fatsz32 = load_le<std::uint32_t>(boot, 0x24);

  if (!valid_sector_size(d.bytes_per_sector) || !valid_cluster_factor(d.sectors_per_cluster) ||
      d.reserved_sectors == 0 || d.fat_count == 0) {
    throw FormatError("corrupt boot record");
  }
  d.sectors_per_fat = fatsz16 != 0 ? fatsz16 : fatsz32;
  d.total_sectors = total16 != 0 ? total16 : total32;
  if (d.sectors_per_fat == 0 || d.total_sectors == 0) throw FormatError("corrupt boot record");

  d.root_dir_sectors = static_cast<std::uint32_t>(
      ceil_div(static_cast<std::uint64_t>(d.root_entry_count) * 32, d.bytes_per_sector));
  const std::uint64_t first_data = static_cast<std::uint64_t>(d.reserved_sectors) +
                                   static_cast<std::uint64_t>(d.fat_count) * d.sectors_per_fat +
                                   d.root_dir_sectors;
  if (first_data >= d.total_sectors) throw FormatError("corrupt boot record");
  if (d.total_sectors > available / d.bytes_per_sector) throw FormatError("corrupt boot record");
  d.first_data_sector = static_cast<std::uint32_t>(first_data);
  d.root_dir_sector = d.reserved_sectors + d.fat_count * d.sectors_per_fat;
  d.cluster_count = static_cast<std::uint32_t>((d.total_sectors - first_data) / d.sectors_per_cluster);

  if (d.cluster_count < 4085) {
    d.kind = FsKind::Fat12;
  } else if (d.cluster_count < 65525) {
    d.kind = FsKind::Fat16;
  } else {
    d.kind = FsKind::Fat32;
    d.root_cluster = load_le<std::uint32_t>(boot, 0x2C);
    if (d.root_cluster < 2 || d.root_cluster >= d.end_cluster()) {
      throw FormatError("corrupt boot record");
    }
  }
  // The FAT must be large enough to describe every cluster.
  const std::uint64_t bits = d.kind == FsKind::Fat12 ? 12 : d.kind == FsKind::Fat16 ? 16 : 32;
  const std::uint64_t needed = ceil_div((static_cast<std::uint64_t>(d.cluster_count) + 2) * bits, 8);
  if (static_cast<std::uint64_t>(d.sectors_per_fat) * d.bytes_per_sector < needed) {
    throw FormatError("corrupt boot record");
  }
  return d;
}

}  // namespace

VolumeDescriptor detect_filesystem(const VolumeImage& img) {
  Bytes boot = img.read(0, 512);
  if (boot[510] != 0x55 || boot[511] != 0xAA) throw FormatError("not a recognized volume");
  if (std::equal(kNtfsOem.begin(), kNtfsOem.end(), boot.begin() + 3)) {
    return parse_ntfs(boot, img.size());
  }
  return parse_fat(boot, img.size());
}

std::uint64_t cluster_offset(const VolumeDescriptor& desc, std::uint64_t cluster) {
  if (cluster < desc.first_cluster() || cluster >= desc.end_cluster()) {
    throw RangeError("cluster " + std::to_string(cluster) + " outside cluster heap");
  }
  if (is_fat(desc.kind)) {
    return static_cast<std::uint64_t>(desc.first_data_sector) * desc.bytes_per_sector +
           (cluster - 2) * desc.cluster_size();
  }
  return cluster * desc.cluster_size();
}

ClusterRef make_cluster_ref(const VolumeImage& img, const VolumeDescriptor& desc,
                            std::uint64_t cluster) {
  return ClusterRef{cluster, img.base_offset() + cluster_offset(desc, cluster)};
}

Bytes read_cluster_run(const VolumeImage& img, const VolumeDescriptor& desc, std::uint64_t first,
                       std::uint64_t count) {
  if (count == 0) return {};
  if (first < desc.first_cluster() || first >= desc.end_cluster() ||
      desc.end_cluster() - first < count) {
    throw RangeError("cluster run outside cluster heap");
  }
  const std::uint64_t cs = desc.cluster_size();
  return img.read(cluster_offset(desc, first), static_cast<std::size_t>(count * cs));
}

Bytes read_clusters(const VolumeImage& img, const VolumeDescriptor& desc,
                    std::span<const std::uint64_t> clusters) {
  for (auto c : clusters) {
    if (c < desc.first_cluster() || c >= desc.end_cluster()) {
      throw RangeError("cluster " + std::to_string(c) + " outside cluster heap");
    }
  }
  const std::uint64_t cs = desc.cluster_size();
  Bytes out(clusters.size() * cs);
  // Coalesce consecutive clusters into single reads.
  std::size_t i = 0;
  while (i < clusters.size()) {
    std::size_t j = i + 1;
    while (j < clusters.size() && clusters[j] == clusters[j - 1] + 1) ++j;
    img.read(cluster_offset(desc, clusters[i]),
             std::span<std::uint8_t>(out.data() + i * cs, (j - i) * cs));
    i = j;
  }
  return out;
}

}  // namespace remnant
