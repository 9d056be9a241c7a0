#pragma once

#include <filesystem>
#include <vector>

#include "sbx/params.hpp"

namespace sbx {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "SBXM" | version u32 | entries until end of file, each:
//   name_len u32 | name bytes | rank u32 | dims u32 x rank | f32 data (row-major)
// All integers and floats little-endian.

std::vector<char> encode_checkpoint(const ParamSet<float>& params);
ParamSet<float> decode_checkpoint(std::vector<char> bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamSet<float>& params);
ParamSet<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace sbx
