#pragma once

// Little-endian byte packing shared by the cloud and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

namespace scalseg::detail {

class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { bytes_.push_back(v); }
  void put_u16(std::uint16_t v) { put_le(v, 2); }
  void put_u32(std::uint32_t v) { put_le(v, 4); }
  void put_i32(std::int32_t v) { put_le(static_cast<std::uint32_t>(v), 4); }
  void put_u64(std::uint64_t v) { put_le(v, 8); }
  void put_f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }
  void put_raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void put_string(std::string_view s) {
    put_u32(static_cast<std::uint32_t>(s.size()));
    put_raw(s);
  }

  const std::vector<char>& bytes() const { return bytes_; }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> bytes_;
};

// Reads from a byte buffer; every getter returns false once the buffer is
// exhausted so callers can report truncation precisely.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::size_t remaining() const { return data_.size() - pos_; }

  bool get_u8(std::uint8_t& v) {
    std::uint64_t x;
    if (!get_le(x, 1)) return false;
    v = static_cast<std::uint8_t>(x);
    return true;
  }
  bool get_u16(std::uint16_t& v) {
    std::uint64_t x;
    if (!get_le(x, 2)) return false;
    v = static_cast<std::uint16_t>(x);
    return true;
  }
  bool get_u32(std::uint32_t& v) {
    std::uint64_t x;
    if (!get_le(x, 4)) return false;
    v = static_cast<std::uint32_t>(x);
    return true;
  }
  bool get_i32(std::int32_t& v) {
    std::uint32_t x;
    if (!get_u32(x)) return false;
    v = static_cast<std::int32_t>(x);
    return true;
  }
  bool get_u64(std::uint64_t& v) { return get_le(v, 8); }
  bool get_f64(double& v) {
    std::uint64_t x;
    if (!get_le(x, 8)) return false;
    v = std::bit_cast<double>(x);
    return true;
  }
  bool get_raw(std::size_t n, std::string& out) {
    if (remaining() < n) return false;
    out.assign(data_.substr(pos_, n));
    pos_ += n;
    return true;
  }
  bool get_string(std::string& out) {
    std::uint32_t n;
    return get_u32(n) && get_raw(n, out);
  }

 private:
  bool get_le(std::uint64_t& v, int n) {
    if (remaining() < static_cast<std::size_t>(n)) return false;
    v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return true;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace scalseg::detail
