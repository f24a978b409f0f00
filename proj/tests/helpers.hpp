#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "remnant/forge.hpp"

namespace remnant::test {

// Per-test scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("remnant-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline forge::FileSpec file(std::string name, FileClass cls, std::uint64_t size, std::uint64_t seed) {
  forge::FileSpec f;
  f.name = std::move(name);
  f.file_class = cls;
  f.size = size;
  f.seed = seed;
  return f;
}

inline forge::CorpusSpec corpus(FsKind kind, std::uint64_t volume_bytes, std::uint32_t spc,
                                std::vector<forge::FileSpec> files) {
  forge::CorpusSpec spec;
  spec.kind = kind;
  spec.geometry.volume_bytes = volume_bytes;
  spec.geometry.sectors_per_cluster = spc;
  spec.files = std::move(files);
  return spec;
}

// ---- independent oracles -------------------------------------------------
// Written from the on-disk format descriptions, sharing nothing with src/.

struct OracleRun {
  std::uint64_t length;
  std::optional<std::int64_t> lcn;
};

// Mapping-pairs decoder: header nibbles give field widths, the offset field
// is a signed delta from the previous absolute LCN, width 0 means sparse.
inline std::vector<OracleRun> oracle_decode_runs(const std::vector<std::uint8_t>& raw) {
  std::vector<OracleRun> out;
  std::int64_t lcn = 0;
  std::size_t i = 0;
  while (i < raw.size() && raw[i] != 0) {
    const int len_w = raw[i] & 0x0F;
    const int off_w = raw[i] >> 4;
    ++i;
    std::uint64_t length = 0;
    for (int k = 0; k < len_w; ++k) length |= std::uint64_t(raw.at(i + k)) << (8 * k);
    i += len_w;
    if (off_w == 0) {
      out.push_back({length, std::nullopt});
      continue;
    }
    std::uint64_t delta = 0;
    for (int k = 0; k < off_w; ++k) delta |= std::uint64_t(raw.at(i + k)) << (8 * k);
    if (raw.at(i + off_w - 1) & 0x80) {
      for (int k = off_w; k < 8; ++k) delta |= std::uint64_t(0xFF) << (8 * k);
    }
    i += off_w;
    lcn += static_cast<std::int64_t>(delta);
    out.push_back({length, lcn});
  }
  return out;
}

inline std::uint64_t oracle_fat_cluster_offset(std::uint64_t first_data_sector, std::uint64_t bps,
                                               std::uint64_t spc, std::uint64_t cluster) {
  return first_data_sector * bps + (cluster - 2) * bps * spc;
}

// Run list with random lengths (1..2^24), random positive and negative
// deltas (multi-byte), and sparse runs, kept inside [0, 2^40).
inline ntfs::RunList random_run_list(std::mt19937_64& rng) {
  ntfs::RunList rl;
  const int n = 1 + static_cast<int>(rng() % 12);
  std::int64_t lcn = static_cast<std::int64_t>(rng() % (1ull << 32));
  for (int i = 0; i < n; ++i) {
    ntfs::Run r;
    const int len_bits = 1 + static_cast<int>(rng() % 24);
    r.length = 1 + rng() % (1ull << len_bits);
    if (rng() % 5 == 0) {
      rl.runs.push_back(r);
      continue;
    }
    const int delta_bits = static_cast<int>(rng() % 36);
    std::int64_t delta = static_cast<std::int64_t>(rng() % (1ull << delta_bits));
    if (rng() % 2) delta = -delta;
    lcn = std::clamp<std::int64_t>(lcn + delta, 0, (1ll << 40) - 1);
    r.lcn = static_cast<std::uint64_t>(lcn);
    rl.runs.push_back(r);
  }
  return rl;
}

}  // namespace remnant::test
