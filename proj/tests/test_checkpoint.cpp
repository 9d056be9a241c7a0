#include <gtest/gtest.h>

#include <random>

#include "sbx/binary_io.hpp"
#include "sbx/checkpoint.hpp"
#include "sbx/nets.hpp"
#include "test_util.hpp"

namespace sbx {
namespace {

using testing::TempDir;

TEST(Checkpoint, RoundTripsEveryNetworkTensor) {
  NetConfig cfg;
  cfg.extractor_adapter = true;
  std::mt19937_64 rng(1);
  const auto all = init_networks<float>(cfg, rng).all();
  TempDir dir("ckpt");
  save_checkpoint(dir.path() / "m.sbxm", all);
  EXPECT_EQ(load_checkpoint(dir.path() / "m.sbxm"), all);
}

TEST(Checkpoint, ByteLayout) {
  ParamSet<float> p;
  p.set("ab", Tensor<float>(Shape{2}, std::vector<float>{1.0f, -2.0f}));
  const auto bytes = encode_checkpoint(p);
  // magic, version, name_len, name, rank, dim, 2 floats
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 2 + 4 + 4 + 8);
  ByteReader r(bytes);
  r.expect_magic("SBXM", "checkpoint");
  EXPECT_EQ(r.u32(), kCheckpointVersion);
  EXPECT_EQ(r.u32(), 2u);
  EXPECT_EQ(r.str(2), "ab");
  EXPECT_EQ(r.u32(), 1u);
  EXPECT_EQ(r.u32(), 2u);
  EXPECT_EQ(r.f32(), 1.0f);
  EXPECT_EQ(r.f32(), -2.0f);
  EXPECT_TRUE(r.at_end());
  EXPECT_TRUE(decode_checkpoint(encode_checkpoint(ParamSet<float>{})).empty());
}

TEST(Checkpoint, CorruptFilesReportOffsets) {
  ParamSet<float> p;
  p.set("w", Tensor<float>(Shape{3, 2}, 0.5f));
  const auto bytes = encode_checkpoint(p);
  for (std::size_t cut = 1; cut < bytes.size(); ++cut) {
    if (cut == 8) continue;  // header only: a valid empty checkpoint
    std::vector<char> prefix(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_THROW(decode_checkpoint(prefix), ParseError) << cut;
  }
  auto bad = bytes;
  bad[0] = 'Z';
  try {
    decode_checkpoint(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  auto version = bytes;
  version[4] = 2;
  EXPECT_THROW(decode_checkpoint(version), ParseError);
  auto dup = bytes;
  dup.insert(dup.end(), bytes.begin() + 8, bytes.end());
  EXPECT_THROW(decode_checkpoint(dup), ParseError);
}

}  // namespace
}  // namespace sbx
