#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "setest/errors.hpp"

// Little-endian primitives shared by the dataset and checkpoint formats.

namespace setest::io {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
  void f32(double v) { f32(static_cast<float>(v)); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  /// u32 that must fit: sizes beyond 2^32 - 1 cannot be represented.
  void size32(std::size_t v, std::string_view what) {
    if (v > 0xffffffffULL) throw RangeError(std::string(what) + " does not fit in 32 bits");
    u32(static_cast<std::uint32_t>(v));
  }

  const std::vector<std::uint8_t>& data() const noexcept { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked cursor; running past the end raises SizeError with the
/// offset, the byte count needed and the total size.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  void need(std::size_t n, std::string_view what) const {
    if (n > remaining()) {
      throw SizeError("truncated " + std::string(what) + " at offset " + std::to_string(pos_) + ": expected " +
                      std::to_string(n) + " bytes, only " + std::to_string(remaining()) + " of " +
                      std::to_string(data_.size()) + " remain (expected total >= " + std::to_string(pos_ + n) +
                      ", actual " + std::to_string(data_.size()) + ")");
    }
  }

  std::uint8_t u8(std::string_view what) {
    need(1, what);
    return data_[pos_++];
  }
  std::uint16_t u16(std::string_view what) { return static_cast<std::uint16_t>(get(2, what)); }
  std::uint32_t u32(std::string_view what) { return static_cast<std::uint32_t>(get(4, what)); }
  float f32(std::string_view what) { return std::bit_cast<float>(u32(what)); }

  std::string bytes(std::size_t n, std::string_view what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  /// Reads n float32 values into doubles.
  void f32_array(std::span<double> out, std::string_view what) {
    need(out.size() * 4, what);
    for (double& v : out) v = static_cast<double>(f32(what));
  }

  void expect_end(std::string_view what) const {
    if (remaining() != 0) {
      throw SizeError(std::string(what) + ": expected " + std::to_string(pos_) + " bytes, file has " +
                      std::to_string(data_.size()) + " (" + std::to_string(remaining()) +
                      " trailing bytes at offset " + std::to_string(pos_) + ")");
    }
  }

 private:
  std::uint64_t get(int n, std::string_view what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write to '" + path + "' failed");
}

inline void write_text_file(const std::string& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::string read_text_file(const std::string& path) {
  const auto b = read_file(path);
  return {b.begin(), b.end()};
}

}  // namespace setest::io
