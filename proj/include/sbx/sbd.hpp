#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "sbx/nets.hpp"
#include "sbx/stream.hpp"

namespace sbx {

struct NoiseConfig {
  /// Smaller lambda means larger noise. Must be positive.
  double lambda = 0.005;
  std::uint64_t rng_seed = 0;
  /// Use per-channel (max - min) ranges instead of one range for the whole batch.
  bool per_channel = false;

  void validate() const;
};

/// A batch of synthetic boundary features E = f' + Laplace noise. Holds plain
/// values only; nothing here is ever put on a tape as trainable.
struct SBDBatch {
  Tensor<float> features;  // [B, w, h, d]
  std::vector<Label> labels;
  std::uint32_t task_id = 0;
  std::uint32_t epoch_tag = 0;

  std::size_t size() const { return labels.size(); }
};

/// (max(f') - min(f')) / (lambda * batch_size) over every element of f'.
template <typename T>
double laplace_scale(const Tensor<T>& f_prime, double lambda, std::size_t batch_size);

/// Per-channel variant of laplace_scale: one scale per entry of the last axis.
template <typename T>
std::vector<double> laplace_scale_per_channel(const Tensor<T>& f_prime, double lambda, std::size_t batch_size);

/// Draws one Laplace(0, scale) value by inverting the CDF.
double sample_laplace_value(std::mt19937_64& rng, double scale);

/// i.i.d. Laplace(0, scale) tensor; scale 0 gives zeros.
Tensor<float> sample_laplace(std::mt19937_64& rng, double scale, const Shape& shape);

/// encode -> self_attention -> + batch-wise Laplace noise. Parameters are read only.
SBDBatch generate_sbd(const NetConfig& cfg, const EncoderParams<float>& p_r, const SAParams<float>& sa,
                      const Tensor<float>& images, const std::vector<Label>& labels, const NoiseConfig& noise,
                      std::uint32_t task_id = 0, std::uint32_t epoch_tag = 0);

/// Same as generate_sbd, also returning the pre-noise f'.
SBDBatch generate_sbd(const NetConfig& cfg, const EncoderParams<float>& p_r, const SAParams<float>& sa,
                      const Tensor<float>& images, const std::vector<Label>& labels, const NoiseConfig& noise,
                      std::uint32_t task_id, std::uint32_t epoch_tag, Tensor<float>* f_prime_out);

}  // namespace sbx
