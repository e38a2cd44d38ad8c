#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "nfcsi/common.hpp"

namespace nfcsi {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts unsupported");

// CRC-32 (IEEE 802.3 / zlib polynomial, reflected).
inline std::uint32_t crc32_update(std::uint32_t crc, const void* buf,
                                  std::size_t len) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  const auto* p = static_cast<const unsigned char*>(buf);
  crc ^= 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

inline std::uint32_t crc32(const void* buf, std::size_t len) {
  return crc32_update(0, buf, len);
}

// Buffered binary writer that tracks a running CRC of everything written.
class CrcWriter {
 public:
  explicit CrcWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open for writing: " + path);
    path_ = path;
  }

  void write_bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    crc_ = crc32_update(crc_, p, n);
  }
  template <typename T>
  void write_pod(T v) {
    write_bytes(&v, sizeof(T));
  }
  std::uint32_t crc() const { return crc_; }

  // Writes the footer CRC (not itself CRC'd) and closes.
  void finish_with_crc() {
    std::uint32_t c = crc_;
    out_.write(reinterpret_cast<const char*>(&c), sizeof(c));
    out_.close();
    if (!out_) throw IoError("write failed: " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
  std::uint32_t crc_ = 0;
};

class CrcReader {
 public:
  explicit CrcReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open for reading: " + path);
    path_ = path;
  }

  void read_bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw IoError("truncated file: " + path_);
    }
    crc_ = crc32_update(crc_, p, n);
  }
  template <typename T>
  T read_pod() {
    T v;
    read_bytes(&v, sizeof(T));
    return v;
  }
  // Reads the footer CRC and verifies it against everything read so far.
  void verify_crc() {
    std::uint32_t expected = crc_;
    std::uint32_t stored;
    in_.read(reinterpret_cast<char*>(&stored), sizeof(stored));
    if (in_.gcount() != sizeof(stored)) throw IoError("truncated file: " + path_);
    if (stored != expected) throw IoError("checksum mismatch: " + path_);
  }

 private:
  std::ifstream in_;
  std::string path_;
  std::uint32_t crc_ = 0;
};

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << body;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace nfcsi
