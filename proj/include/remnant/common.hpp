#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace remnant {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

// Error hierarchy. Every failure the library reports derives from Error so
// callers (CLI, bindings) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The backing file could not be opened or is unusable.
class ImageError : public Error {
 public:
  using Error::Error;
};

/// The volume is not a recognized filesystem or its boot record is corrupt.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A byte or cluster address fell outside the addressable range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// On-disk metadata is damaged beyond the point of parsing.
class CorruptError : public Error {
 public:
  using Error::Error;
};

template <typename T>
T load_le(ByteView buf, std::size_t offset) {
  static_assert(std::is_integral_v<T>);
  if (offset > buf.size() || buf.size() - offset < sizeof(T)) {
    throw RangeError("little-endian read past buffer end");
  }
  std::make_unsigned_t<T> v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::make_unsigned_t<T>>(buf[offset + i]) << (8 * i);
  }
  return static_cast<T>(v);
}

template <typename T>
void store_le(std::span<std::uint8_t> buf, std::size_t offset, T value) {
  static_assert(std::is_integral_v<T>);
  if (offset > buf.size() || buf.size() - offset < sizeof(T)) {
    throw RangeError("little-endian write past buffer end");
  }
  auto v = static_cast<std::make_unsigned_t<T>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[offset + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
}

/// Incremental SHA-256 (backed by OpenSSL's EVP interface).
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;
  Sha256(Sha256&&) noexcept;
  Sha256& operator=(Sha256&&) noexcept;

  void update(ByteView data);
  void update(std::string_view data);
  std::string hex_digest();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(ByteView data);
std::string sha256_file(const std::filesystem::path& path);

std::string to_hex(ByteView data);

inline bool is_power_of_two(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

}  // namespace remnant
