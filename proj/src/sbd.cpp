#include "sbx/sbd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sbx {

void NoiseConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("noise: lambda must be positive");
}

namespace {

void check_scale_args(std::size_t numel, double lambda, std::size_t batch_size) {
  if (numel == 0) throw std::invalid_argument("laplace_scale: empty tensor");
  if (!(lambda > 0.0)) throw std::invalid_argument("laplace_scale: lambda must be positive");
  if (batch_size == 0) throw std::invalid_argument("laplace_scale: batch size must be at least 1");
}

}  // namespace

template <typename T>
double laplace_scale(const Tensor<T>& f_prime, double lambda, std::size_t batch_size) {
  check_scale_args(f_prime.numel(), lambda, batch_size);
  const auto [lo, hi] = std::minmax_element(f_prime.data().begin(), f_prime.data().end());
  return (static_cast<double>(*hi) - static_cast<double>(*lo)) / (lambda * static_cast<double>(batch_size));
}

template <typename T>
std::vector<double> laplace_scale_per_channel(const Tensor<T>& f_prime, double lambda, std::size_t batch_size) {
  check_scale_args(f_prime.numel(), lambda, batch_size);
  const std::size_t channels = f_prime.shape().back();
  std::vector<double> lo(channels, INFINITY), hi(channels, -INFINITY);
  auto v = f_prime.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = static_cast<double>(v[i]);
    lo[i % channels] = std::min(lo[i % channels], x);
    hi[i % channels] = std::max(hi[i % channels], x);
  }
  std::vector<double> out(channels);
  for (std::size_t c = 0; c < channels; ++c) out[c] = (hi[c] - lo[c]) / (lambda * static_cast<double>(batch_size));
  return out;
}

double sample_laplace_value(std::mt19937_64& rng, double scale) {
  if (scale < 0.0) throw std::invalid_argument("sample_laplace: negative scale");
  std::uniform_real_distribution<double> uniform(-0.5, 0.5);
  double u = uniform(rng);
  while (u == -0.5) u = uniform(rng);  // ln(0) at the open end
  if (scale == 0.0) return 0.0;
  const double sign = u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0);
  return -scale * sign * std::log(1.0 - 2.0 * std::abs(u));
}

Tensor<float> sample_laplace(std::mt19937_64& rng, double scale, const Shape& shape) {
  if (scale < 0.0) throw std::invalid_argument("sample_laplace: negative scale");
  Tensor<float> out(shape);
  if (scale == 0.0) return out;
  for (float& v : out.data()) v = static_cast<float>(sample_laplace_value(rng, scale));
  return out;
}

SBDBatch generate_sbd(const NetConfig& cfg, const EncoderParams<float>& p_r, const SAParams<float>& sa,
                      const Tensor<float>& images, const std::vector<Label>& labels, const NoiseConfig& noise,
                      std::uint32_t task_id, std::uint32_t epoch_tag) {
  return generate_sbd(cfg, p_r, sa, images, labels, noise, task_id, epoch_tag, nullptr);
}

SBDBatch generate_sbd(const NetConfig& cfg, const EncoderParams<float>& p_r, const SAParams<float>& sa,
                      const Tensor<float>& images, const std::vector<Label>& labels, const NoiseConfig& noise,
                      std::uint32_t task_id, std::uint32_t epoch_tag, Tensor<float>* f_prime_out) {
  noise.validate();
  if (labels.empty()) throw std::invalid_argument("generate_sbd: empty batch");
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw std::invalid_argument("generate_sbd: " + std::to_string(labels.size()) + " labels for images " +
                                shape_str(images.shape()));
  }

  Tensor<float> f_prime;
  {
    Tape<float> tape;
    auto enc = bind(tape, p_r.params, false);
    auto att = bind(tape, sa.params, false);
    f_prime = self_attention(cfg, att, encode(cfg, enc, tape.constant(images))).value();
  }

  const std::size_t batch = labels.size();
  std::mt19937_64 rng(noise.rng_seed);
  SBDBatch out;
  out.labels = labels;
  out.task_id = task_id;
  out.epoch_tag = epoch_tag;
  out.features = f_prime;
  auto e = out.features.data();
  if (noise.per_channel) {
    const auto scales = laplace_scale_per_channel(f_prime, noise.lambda, batch);
    const std::size_t channels = scales.size();
    for (std::size_t i = 0; i < e.size(); ++i) {
      e[i] += static_cast<float>(sample_laplace_value(rng, scales[i % channels]));
    }
  } else {
    const Tensor<float> lap = sample_laplace(rng, laplace_scale(f_prime, noise.lambda, batch), f_prime.shape());
    auto l = lap.data();
    for (std::size_t i = 0; i < e.size(); ++i) e[i] += l[i];
  }
  if (f_prime_out) *f_prime_out = std::move(f_prime);
  return out;
}

template double laplace_scale(const Tensor<float>&, double, std::size_t);
template double laplace_scale(const Tensor<double>&, double, std::size_t);
template std::vector<double> laplace_scale_per_channel(const Tensor<float>&, double, std::size_t);
template std::vector<double> laplace_scale_per_channel(const Tensor<double>&, double, std::size_t);

}  // namespace sbx
