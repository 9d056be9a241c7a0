#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sbx/gradcheck.hpp"
#include "sbx/nets.hpp"
#include "test_util.hpp"

namespace sbx {
namespace {

using testing::random_tensor;
using testing::uniform_size;

NetConfig attention_config(std::size_t d, std::size_t w, std::size_t h) {
  NetConfig c;
  c.feature_channels = d;
  // Stride arithmetic is irrelevant here; only d is read by the attention layer.
  c.input_height = 4 * w;
  c.input_width = 4 * h;
  return c;
}

TEST(Nets, InitShapesForDefaults) {
  NetConfig cfg;
  std::mt19937_64 rng(1);
  auto n = init_networks<float>(cfg, rng);
  EXPECT_EQ(n.encoder.params.at("p_r.conv2.weight").shape(), (Shape{3, 3, 8, 16}));
  EXPECT_EQ(n.attention.params.at("sa.w_k").shape(), (Shape{16, 2}));
  EXPECT_EQ(n.model.params.at("f_r.weight").shape(), (Shape{256, 64}));
  EXPECT_EQ(n.model.params.at("f_e.weight").shape(), n.model.params.at("f_r.weight").shape());
  EXPECT_EQ(n.model.params.at("c.weight").shape(), (Shape{64, 10}));
  EXPECT_TRUE(n.extractor.params.empty());
  EXPECT_EQ(n.model.params.at("c.bias").vec(), std::vector<float>(10, 0.0f));
}

TEST(Nets, KeyWidthIsAtLeastOne) {
  NetConfig cfg;
  cfg.feature_channels = 4;
  EXPECT_EQ(cfg.key_channels(), 1u);
  cfg.feature_channels = 32;
  EXPECT_EQ(cfg.key_channels(), 4u);
}

TEST(Nets, SinglePositionFeatureMapRejected) {
  NetConfig cfg;
  cfg.input_height = 4;
  cfg.input_width = 4;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Nets, EncodeShapeAndZeroImage) {
  NetConfig cfg;
  std::mt19937_64 rng(2);
  auto n = init_networks<double>(cfg, rng);
  Tape<double> tape;
  auto p_r = bind(tape, n.encoder.params, false);
  auto f = encode(cfg, p_r, tape.constant(Tensor<double>(cfg.image_shape(3))));
  EXPECT_EQ(f.shape(), (Shape{3, 4, 4, 16}));
  for (double v : f.value().data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(encode(cfg, p_r, tape.constant(Tensor<double>(Shape{1, 8, 8, 1}))), std::invalid_argument);
}

TEST(Nets, IdenticalImagesGiveIdenticalFeatureRows) {
  NetConfig cfg;
  std::mt19937_64 rng(3);
  auto n = init_networks<double>(cfg, rng);
  auto one = random_tensor<double>(rng, cfg.image_shape(1));
  std::vector<double> both(one.vec());
  both.insert(both.end(), one.vec().begin(), one.vec().end());
  const auto f = refined_features(cfg, n, Tensor<double>(cfg.image_shape(2), both));
  const std::size_t row = cfg.feature_numel();
  for (std::size_t i = 0; i < row; ++i) EXPECT_EQ(f[i], f[row + i]);
}

TEST(Nets, AttentionMatchesLoopOracleOnRandomShapes) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t b = uniform_size(rng, 1, 4), w = uniform_size(rng, 2, 4), h = uniform_size(rng, 2, 4),
                      d = uniform_size(rng, 4, 16);
    NetConfig cfg = attention_config(d, w, h);
    auto n = init_networks<double>(cfg, rng);
    auto& p = n.attention.params;
    for (auto& [_, t] : p) t = random_tensor<double>(rng, t.shape());
    const auto f = random_tensor<double>(rng, {b, w, h, d});
    Tape<double> tape;
    auto sa = bind(tape, p, false);
    Var<double> attn;
    const auto got = self_attention(cfg, sa, tape.constant(f), &attn).value();
    std::vector<std::vector<std::vector<double>>> want_attn;
    const auto want = oracle::self_attention(f, p.at("sa.w_k"), p.at("sa.w_q"), p.at("sa.v.weight"), p.at("sa.v.bias"),
                                             p.at("sa.i.weight"), p.at("sa.i.bias"), &want_attn);
    for (std::size_t i = 0; i < got.numel(); ++i) ASSERT_NEAR(got[i], want[i], 1e-9);
    const std::size_t P = w * h;
    for (std::size_t bb = 0; bb < b; ++bb) {
      for (std::size_t j = 0; j < P; ++j) {
        double s = 0;
        for (std::size_t i = 0; i < P; ++i) {
          const double a = attn.value()[(bb * P + j) * P + i];
          ASSERT_GE(a, 0.0);
          ASSERT_NEAR(a, want_attn[bb][j][i], 1e-12);
          s += a;
        }
        ASSERT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(Nets, ZeroKeyAndQueryGiveUniformAttention) {
  NetConfig cfg;
  std::mt19937_64 rng(5);
  auto n = init_networks<double>(cfg, rng);
  n.attention.params.at("sa.w_k").fill(0.0);
  n.attention.params.at("sa.w_q").fill(0.0);
  Tape<double> tape;
  auto sa = bind(tape, n.attention.params, false);
  Var<double> attn;
  self_attention(cfg, sa, tape.constant(random_tensor<double>(rng, cfg.feature_shape(2))), &attn);
  for (double a : attn.value().data()) EXPECT_DOUBLE_EQ(a, 1.0 / 16.0);
}

TEST(Nets, ResidualFlagAddsInput) {
  NetConfig cfg;
  std::mt19937_64 rng(6);
  auto n = init_networks<double>(cfg, rng);
  const auto f = random_tensor<double>(rng, cfg.feature_shape(2));
  Tape<double> tape;
  auto sa = bind(tape, n.attention.params, false);
  const auto plain = self_attention(cfg, sa, tape.constant(f)).value();
  NetConfig res = cfg;
  res.attention_residual = true;
  const auto with = self_attention(res, sa, tape.constant(f)).value();
  for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_NEAR(with[i], plain[i] + f[i], 1e-12);
}

TEST(Nets, BatchPermutationPermutesOutputs) {
  NetConfig cfg;
  std::mt19937_64 rng(7);
  auto n = init_networks<double>(cfg, rng);
  const auto x = random_tensor<double>(rng, cfg.image_shape(3));
  const std::size_t row = cfg.image_numel();
  std::vector<double> swapped(x.numel());
  const std::size_t order[3] = {2, 0, 1};
  for (std::size_t k = 0; k < 3; ++k) {
    std::copy_n(x.vec().begin() + static_cast<std::ptrdiff_t>(order[k] * row), row,
                swapped.begin() + static_cast<std::ptrdiff_t>(k * row));
  }
  const auto a = r_path_logits(cfg, n, x);
  const auto b = r_path_logits(cfg, n, Tensor<double>(x.shape(), swapped));
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
      EXPECT_DOUBLE_EQ(b[k * cfg.num_classes + c], a[order[k] * cfg.num_classes + c]);
    }
  }
}

TEST(Nets, ZeroClassifierGivesZeroLogits) {
  NetConfig cfg;
  std::mt19937_64 rng(8);
  auto n = init_networks<double>(cfg, rng);
  n.model.params.at("c.weight").fill(0.0);
  const auto logits = r_path_logits(cfg, n, random_tensor<double>(rng, cfg.image_shape(2)));
  for (double v : logits.data()) EXPECT_EQ(v, 0.0);
}

TEST(Nets, ZeroExtractorDenseLeavesOnlyClassifierBias) {
  NetConfig cfg;
  std::mt19937_64 rng(9);
  auto n = init_networks<double>(cfg, rng);
  n.model.params.at("f_e.weight").fill(0.0);
  n.model.params.at("c.bias") = random_tensor<double>(rng, {cfg.num_classes});
  const auto logits = e_path_logits(cfg, n, random_tensor<double>(rng, cfg.feature_shape(3)));
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
      EXPECT_EQ(logits[b * cfg.num_classes + c], n.model.params.at("c.bias")[c]);
    }
  }
}

TEST(Nets, PathsDifferOnSameInput) {
  NetConfig cfg;
  std::mt19937_64 rng(10);
  auto n = init_networks<double>(cfg, rng);
  const auto f = random_tensor<double>(rng, cfg.feature_shape(1), 0.0, 1.0);
  Tape<double> tape;
  auto m = bind(tape, n.model.params, false);
  auto pe = bind(tape, n.extractor.params, false);
  const auto r = classify_r_path(cfg, m, tape.constant(f)).value();
  const auto e = classify_e_path(cfg, m, pe, tape.constant(f)).value();
  EXPECT_NE(r, e);
  n.model.params.at("f_e.weight") = n.model.params.at("f_r.weight");
  EXPECT_EQ(r, e_path_logits(cfg, n, f));
}

TEST(Nets, AdapterExtractorHasDByDWeights) {
  NetConfig cfg;
  cfg.extractor_adapter = true;
  std::mt19937_64 rng(11);
  auto n = init_networks<double>(cfg, rng);
  EXPECT_EQ(n.extractor.params.at("p_e.weight").shape(), (Shape{16, 16}));
  EXPECT_EQ(e_path_logits(cfg, n, Tensor<double>(cfg.feature_shape(2))).shape(), (Shape{2, 10}));
}

// Small network so every parameter can be probed by central differences.
NetConfig tiny_config() {
  NetConfig cfg;
  cfg.input_height = 8;
  cfg.input_width = 8;
  cfg.conv1_channels = 3;
  cfg.feature_channels = 8;
  cfg.hidden = 6;
  cfg.num_classes = 3;
  cfg.extractor_adapter = true;
  return cfg;
}

TEST(Nets, RPathGradientsMatchFiniteDifferences) {
  const NetConfig cfg = tiny_config();
  std::mt19937_64 rng(12);
  auto n = init_networks<double>(cfg, rng);
  for (auto* set : {&n.encoder.params, &n.attention.params, &n.model.params}) {
    for (auto& [_, t] : *set) t = random_tensor<double>(rng, t.shape(), -0.8, 0.8);
  }
  const auto images = random_tensor<double>(rng, cfg.image_shape(2));
  const std::vector<std::uint16_t> labels{0, 2};
  ParamSet<double> all = n.all();
  auto loss_of = [&](const ParamSet<double>& ps, Gradients<double>* grads) {
    Tape<double> tape;
    auto vars = bind(tape, ps, grads != nullptr);
    auto loss = cross_entropy(classify_r_path(cfg, vars, self_attention(cfg, vars, encode(cfg, vars, tape.constant(images)))),
                              labels);
    const double v = loss.value()[0];
    if (grads) *grads = tape.backward(loss);
    return v;
  };
  Gradients<double> grads;
  loss_of(all, &grads);
  for (const auto& [name, t] : all) {
    if (name.rfind("p_e", 0) == 0 || name.rfind("f_e", 0) == 0) continue;
    auto f = [&](const Tensor<double>& probe) {
      ParamSet<double> ps = all;
      ps.at(name) = probe;
      return loss_of(ps, nullptr);
    };
    EXPECT_LE(max_relative_error(grads.at(name), finite_diff<double>(f, t, 1e-5), 1e-6), 1e-4) << name;
  }
}

TEST(Nets, EPathGradientsMatchFiniteDifferences) {
  const NetConfig cfg = tiny_config();
  std::mt19937_64 rng(13);
  auto n = init_networks<double>(cfg, rng);
  const auto e = random_tensor<double>(rng, cfg.feature_shape(3), -2.0, 2.0);
  const std::vector<std::uint16_t> labels{1, 0, 2};
  ParamSet<double> ps = n.model.params;
  ps.merge(n.extractor.params);
  auto loss_of = [&](const ParamSet<double>& p, Gradients<double>* grads) {
    Tape<double> tape;
    auto vars = bind(tape, p, grads != nullptr);
    auto loss = cross_entropy(classify_e_path(cfg, vars, vars, tape.constant(e)), labels);
    const double v = loss.value()[0];
    if (grads) *grads = tape.backward(loss);
    return v;
  };
  Gradients<double> grads;
  loss_of(ps, &grads);
  for (const auto& [name, t] : ps) {
    auto f = [&](const Tensor<double>& probe) {
      ParamSet<double> q = ps;
      q.at(name) = probe;
      return loss_of(q, nullptr);
    };
    EXPECT_LE(max_relative_error(grads.at(name), finite_diff<double>(f, t, 1e-5), 1e-6), 1e-4) << name;
  }
  EXPECT_EQ(grads.at("f_r.weight"), Tensor<double>(ps.at("f_r.weight").shape()));
}

TEST(Nets, FromAllRoundTripsAndRejectsForeignShapes) {
  NetConfig cfg;
  std::mt19937_64 rng(14);
  auto n = init_networks<float>(cfg, rng);
  auto back = Networks<float>::from_all(cfg, n.all());
  EXPECT_EQ(back.all(), n.all());
  auto bad = n.all();
  bad.at("c.bias") = Tensor<float>(Shape{3});
  EXPECT_THROW(Networks<float>::from_all(cfg, bad), std::invalid_argument);
}

TEST(Nets, FloatAndDoubleInitAgreeUpToRounding) {
  NetConfig cfg;
  std::mt19937_64 a(15), b(15);
  auto nf = init_networks<float>(cfg, a);
  auto nd = init_networks<double>(cfg, b);
  EXPECT_EQ(nf.all(), nd.all().cast<float>());
}

}  // namespace
}  // namespace sbx
