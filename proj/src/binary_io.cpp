#include "sbx/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace sbx {

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void ByteReader::need(std::uint64_t n, const char* what) const {
  if (remaining() < n) {
    throw ParseError(std::string("truncated input reading ") + what + " (need " + std::to_string(n) + " bytes, have " +
                         std::to_string(remaining()) + ")",
                     pos_);
  }
}

std::uint64_t ByteReader::get(int n, const char* what) {
  need(static_cast<std::uint64_t>(n), what);
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  }
  pos_ += static_cast<std::uint64_t>(n);
  return v;
}

void ByteReader::expect_magic(std::string_view magic, std::string_view what) {
  need(magic.size(), "magic");
  if (std::string_view(data_.data() + pos_, magic.size()) != magic) {
    throw ParseError("bad magic: not a " + std::string(what) + " file (expected \"" + std::string(magic) + "\")", pos_);
  }
  pos_ += magic.size();
}

void ByteReader::f32s(std::span<float> out) {
  need(4 * static_cast<std::uint64_t>(out.size()), "float block");
  for (float& v : out) v = f32();
}

std::string ByteReader::str(std::size_t n) {
  need(n, "string");
  std::string s(data_.data() + pos_, n);
  pos_ += n;
  return s;
}

}  // namespace sbx
