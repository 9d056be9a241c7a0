#include "sbx/checkpoint.hpp"

#include "sbx/binary_io.hpp"

namespace sbx {

std::vector<char> encode_checkpoint(const ParamSet<float>& params) {
  ByteWriter w;
  w.bytes("SBXM");
  w.u32(kCheckpointVersion);
  for (const auto& [name, t] : params) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.f32s(t.data());
  }
  return w.buffer();
}

ParamSet<float> decode_checkpoint(std::vector<char> bytes) {
  ByteReader r(std::move(bytes));
  r.expect_magic("SBXM", "checkpoint");
  const std::uint64_t version_at = r.offset();
  if (const std::uint32_t v = r.u32(); v != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(v), version_at);
  }
  ParamSet<float> out;
  while (!r.at_end()) {
    const std::uint64_t entry_at = r.offset();
    const std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw ParseError("invalid rank " + std::to_string(rank) + " for " + name, entry_at);
    Shape shape(rank);
    for (auto& d : shape) {
      d = r.u32();
      if (d == 0) throw ParseError("zero dimension in " + name, r.offset() - 4);
    }
    if (out.contains(name)) throw ParseError("duplicate entry " + name, entry_at);
    Tensor<float> t(shape);
    r.f32s(t.data());
    out.set(name, std::move(t));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet<float>& params) {
  write_file(path, encode_checkpoint(params));
}

ParamSet<float> load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace sbx
