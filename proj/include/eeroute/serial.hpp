#pragma once

// Little-endian binary encoding helpers plus CRC32, shared by all of the
// project's file formats (database, model checkpoint, dataset).

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eeroute {

/// Thrown on malformed binary streams. Carries the byte offset at which
/// decoding failed.
class format_error : public std::runtime_error {
public:
  format_error(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

/// CRC-32 (IEEE 802.3, zlib-compatible), table-driven.
inline std::uint32_t crc32(std::span<const std::uint8_t> data, std::uint32_t seed = 0) {
  static const auto table = [] {
    std::vector<std::uint32_t> t(256);
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  for (std::uint8_t b : data) c = table[(c ^ b) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

/// Append-only little-endian byte buffer.
class ByteWriter {
public:
  void put_u8(std::uint8_t v) { buf_.push_back(v); }
  void put_u16(std::uint16_t v) { put_le(v, 2); }
  void put_u32(std::uint32_t v) { put_le(v, 4); }
  void put_u64(std::uint64_t v) { put_le(v, 8); }
  void put_f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(bits);
  }
  void put_bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void put_magic(std::string_view m) {
    buf_.insert(buf_.end(), m.begin(), m.end());
  }

  std::size_t size() const noexcept { return buf_.size(); }
  std::span<const std::uint8_t> bytes() const noexcept { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader over an existing buffer.
class ByteReader {
public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t get_u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t get_u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t get_u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t get_u64() { return get_le(8); }
  float get_f32() {
    std::uint32_t bits = get_u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  void expect_magic(std::string_view m) {
    if (data_.size() - pos_ < m.size())
      throw format_error("truncated stream while reading magic", pos_);
    if (std::memcmp(data_.data() + pos_, m.data(), m.size()) != 0)
      throw format_error("bad magic", pos_);
    pos_ += m.size();
  }

  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
  std::uint64_t get_le(int n) {
    if (remaining() < static_cast<std::size_t>(n))
      throw format_error("truncated stream", pos_);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t(data_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace eeroute
