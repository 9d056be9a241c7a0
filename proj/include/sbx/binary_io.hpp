#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sbx {

/// Malformed or truncated file. The message names the byte offset.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<char>& bytes);

/// Little-endian encoder into an in-memory buffer.
class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
  void f32s(std::span<const float> vs) {
    for (float v : vs) f32(v);
  }

  const std::vector<char>& buffer() const { return buf_; }
  /// Writes the buffer to `path`, replacing any existing file.
  void write_file(const std::filesystem::path& path) const { sbx::write_file(path, buf_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  std::vector<char> buf_;
};

/// Little-endian decoder with bounds checks that report the failing offset.
class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}
  static ByteReader from_file(const std::filesystem::path& path) { return ByteReader(read_file(path)); }

  void expect_magic(std::string_view magic, std::string_view what);
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2, "u16")); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4, "u32")); }
  std::uint64_t u64() { return get(8, "u64"); }
  float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(get(4, "f32"))); }
  void f32s(std::span<float> out);
  std::string str(std::size_t n);

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  std::uint64_t get(int n, const char* what);
  void need(std::uint64_t n, const char* what) const;

  std::vector<char> data_;
  std::uint64_t pos_ = 0;
};

}  // namespace sbx
