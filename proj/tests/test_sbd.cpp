#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sbx/sbd.hpp"
#include "test_util.hpp"

namespace sbx {
namespace {

using testing::random_tensor;

TEST(Sbd, LaplaceScaleExamples) {
  Tensor<float> f(Shape{2, 2}, std::vector<float>{0.0f, 1.0f, 0.5f, 0.25f});
  EXPECT_EQ(laplace_scale(f, 0.005, 128), 1.5625);
  Tensor<double> g(Shape{1, 2}, std::vector<double>{3.0, -1.0});
  EXPECT_DOUBLE_EQ(laplace_scale(g, 0.005, 1), 800.0);
}

TEST(Sbd, LaplaceScaleRejectsBadArguments) {
  Tensor<float> f(Shape{1, 2});
  EXPECT_THROW(laplace_scale(f, 0.0, 4), std::invalid_argument);
  EXPECT_THROW(laplace_scale(f, -1.0, 4), std::invalid_argument);
  EXPECT_THROW(laplace_scale(f, 0.1, 0), std::invalid_argument);
}

TEST(Sbd, SmallerLambdaGivesLargerScale) {
  std::mt19937_64 rng(1);
  const auto f = random_tensor<float>(rng, {4, 2, 2, 3});
  double prev = 0.0;
  for (double lambda : {10.0, 1.0, 0.1, 0.005, 0.0001}) {
    const double s = laplace_scale(f, lambda, 4);
    EXPECT_GT(s, prev);
    prev = s;
  }
}

TEST(Sbd, PerChannelScaleUsesEachChannelRange) {
  // channel 0 spans [0, 2], channel 1 spans [-1, 1]
  Tensor<float> f(Shape{2, 1, 1, 2}, std::vector<float>{0.0f, -1.0f, 2.0f, 1.0f});
  const auto s = laplace_scale_per_channel(f, 0.5, 2);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s[0], 2.0);
  EXPECT_DOUBLE_EQ(s[1], 2.0);
  EXPECT_DOUBLE_EQ(laplace_scale(f, 0.5, 2), 3.0);
}

TEST(Sbd, ZeroScaleGivesZeros) {
  std::mt19937_64 rng(2);
  const auto zeros = sample_laplace(rng, 0.0, Shape{3, 4});
  for (float v : zeros.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(sample_laplace(rng, -1.0, Shape{2}), std::invalid_argument);
}

// Monte-Carlo against the Laplace moments: E[X] = 0, E|X| = b, P(|X| > t) = exp(-t/b).
TEST(Sbd, LaplaceMomentsAndTail) {
  for (double b : {0.1, 1.5625, 800.0}) {
    std::mt19937_64 rng(3);
    const std::size_t n = 200000;
    double sum = 0, abs_sum = 0;
    std::size_t beyond = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = sample_laplace_value(rng, b);
      sum += x;
      abs_sum += std::abs(x);
      if (std::abs(x) > 2.0 * b) ++beyond;
    }
    EXPECT_LE(std::abs(sum / n), 0.02 * b) << b;
    EXPECT_NEAR(abs_sum / n / b, 1.0, 0.02) << b;
    EXPECT_NEAR(static_cast<double>(beyond) / n, std::exp(-2.0), 0.005) << b;
  }
}

TEST(Sbd, SamplingIsSeedDeterministic) {
  std::mt19937_64 a(9), b(9);
  EXPECT_EQ(sample_laplace(a, 1.0, Shape{50}), sample_laplace(b, 1.0, Shape{50}));
}

struct SbdFixture : ::testing::Test {
  NetConfig cfg;
  Networks<float> nets;
  Tensor<float> images;
  std::vector<Label> labels;

  void SetUp() override {
    std::mt19937_64 rng(4);
    nets = init_networks<float>(cfg, rng);
    images = random_tensor<float>(rng, cfg.image_shape(128), 0.0, 1.0);
    labels.assign(128, 0);
    for (std::size_t i = 0; i < 128; ++i) labels[i] = static_cast<Label>(i % 10);
  }
};

TEST_F(SbdFixture, HugeLambdaLeavesFeaturesIntact) {
  Tensor<float> f_prime;
  NoiseConfig noise{1e30, 5, false};
  auto e = generate_sbd(cfg, nets.encoder, nets.attention, images, labels, noise, 2, 3, &f_prime);
  EXPECT_EQ(e.features, f_prime);
  EXPECT_EQ(e.labels, labels);
  EXPECT_EQ(e.task_id, 2u);
  EXPECT_EQ(e.epoch_tag, 3u);
  EXPECT_EQ(f_prime, refined_features(cfg, nets, images));
}

TEST_F(SbdFixture, NoiseMagnitudeMatchesScale) {
  Tensor<float> f_prime;
  NoiseConfig noise{0.005, 6, false};
  auto e = generate_sbd(cfg, nets.encoder, nets.attention, images, labels, noise, 0, 0, &f_prime);
  const double b = laplace_scale(f_prime, 0.005, 128);
  double mad = 0;
  for (std::size_t i = 0; i < f_prime.numel(); ++i) mad += std::abs(static_cast<double>(e.features[i]) - f_prime[i]);
  mad /= static_cast<double>(f_prime.numel());
  EXPECT_NEAR(mad / b, 1.0, 0.05);
}

TEST_F(SbdFixture, PerChannelNoiseStaysWithinChannelScale) {
  Tensor<float> f_prime;
  NoiseConfig noise{0.005, 7, true};
  auto e = generate_sbd(cfg, nets.encoder, nets.attention, images, labels, noise, 0, 0, &f_prime);
  const auto scales = laplace_scale_per_channel(f_prime, 0.005, 128);
  const std::size_t d = scales.size();
  std::vector<double> mad(d, 0.0);
  for (std::size_t i = 0; i < f_prime.numel(); ++i) mad[i % d] += std::abs(static_cast<double>(e.features[i]) - f_prime[i]);
  for (std::size_t c = 0; c < d; ++c) {
    if (scales[c] == 0.0) continue;
    EXPECT_NEAR(mad[c] / static_cast<double>(f_prime.numel() / d) / scales[c], 1.0, 0.2) << c;
  }
}

TEST_F(SbdFixture, SameSeedSameNoiseDifferentSeedDifferentNoise) {
  NoiseConfig a{0.005, 11, false}, b{0.005, 12, false};
  auto e1 = generate_sbd(cfg, nets.encoder, nets.attention, images, labels, a);
  auto e2 = generate_sbd(cfg, nets.encoder, nets.attention, images, labels, a);
  auto e3 = generate_sbd(cfg, nets.encoder, nets.attention, images, labels, b);
  EXPECT_EQ(e1.features, e2.features);
  EXPECT_NE(e1.features, e3.features);
}

TEST_F(SbdFixture, RejectsMismatchedInputs) {
  NoiseConfig noise;
  std::vector<Label> short_labels(5, 0);
  EXPECT_THROW(generate_sbd(cfg, nets.encoder, nets.attention, images, short_labels, noise), std::invalid_argument);
  NoiseConfig bad{0.0, 0, false};
  EXPECT_THROW(generate_sbd(cfg, nets.encoder, nets.attention, images, labels, bad), std::invalid_argument);
}

}  // namespace
}  // namespace sbx
