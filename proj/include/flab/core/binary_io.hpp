#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "flab/core/error.hpp"

namespace flab::io {

/// Appends fixed-width little-endian values to a byte buffer.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void i32(std::int32_t v) { put_le(static_cast<std::uint32_t>(v)); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { buf_ += s; }

  const std::string& buffer() const noexcept { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  template <typename U>
  void put_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

/// Bounds-checked reader; every failure reports the byte offset.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data, std::size_t offset = 0) : data_(data), pos_(offset) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(get_le<std::uint32_t>()); }
  float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::uint32_t u32_be() {
    const auto* p = reinterpret_cast<const unsigned char*>(take(4));
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | p[3];
  }
  std::string_view raw(std::size_t n) { return {take(n), n}; }

  /// Reads up to and excluding the next '\n', consuming it.
  std::string line() {
    const auto end = data_.find('\n', pos_);
    if (end == std::string_view::npos) throw ParseError("unterminated header line", pos_);
    std::string s(data_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return s;
  }

 private:
  const char* take(std::size_t n) {
    if (remaining() < n)
      throw ParseError("truncated input: need " + std::to_string(n) + " bytes, " +
                           std::to_string(remaining()) + " left",
                       pos_);
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }

  template <typename U>
  U get_le() {
    const auto* p = reinterpret_cast<const unsigned char*>(take(sizeof(U)));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= U(p[i]) << (8 * i);
    return v;
  }

  std::string_view data_;
  std::size_t pos_;
};

}  // namespace flab::io
