#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "sbx/params.hpp"
#include "sbx/tape.hpp"

namespace sbx {

/// Shapes of the encoder, attention layer, extractor and classifier.
struct NetConfig {
  std::size_t input_height = 16;
  std::size_t input_width = 16;
  std::size_t input_channels = 1;
  std::size_t conv1_channels = 8;
  /// d: channels of the encoded feature map, shared by the attention layer.
  std::size_t feature_channels = 16;
  std::size_t hidden = 64;
  std::size_t num_classes = 10;
  /// P_E is the identity unless this is set, in which case it is a 1x1 conv d->d.
  bool extractor_adapter = false;
  /// Adds f to the attention output (ablation only; off by default).
  bool attention_residual = false;

  // Two 3x3 stride-2 convs with padding 1.
  std::size_t feature_height() const { return ((input_height - 1) / 2) / 2 + 1; }
  std::size_t feature_width() const { return ((input_width - 1) / 2) / 2 + 1; }
  std::size_t key_channels() const { return feature_channels / 8 > 0 ? feature_channels / 8 : 1; }
  std::size_t value_channels() const { return feature_channels; }
  std::size_t positions() const { return feature_height() * feature_width(); }
  std::size_t feature_numel() const { return positions() * feature_channels; }
  Shape feature_shape(std::size_t batch) const { return {batch, feature_height(), feature_width(), feature_channels}; }
  Shape image_shape(std::size_t batch) const { return {batch, input_height, input_width, input_channels}; }
  std::size_t image_numel() const { return input_height * input_width * input_channels; }

  /// Throws std::invalid_argument on zero sizes or a single-position feature map.
  void validate() const;
};

/// P_R: conv(3x3, s2) -> relu -> conv(3x3, s2) -> relu.
template <typename T>
struct EncoderParams {
  ParamSet<T> params;
};

/// W_K, W_Q [d x d_k]; V: 1x1 conv d -> d_v; I: 1x1 conv d_v -> d.
template <typename T>
struct SAParams {
  ParamSet<T> params;
};

/// P_E. Empty for the identity extractor.
template <typename T>
struct ExtractorParams {
  ParamSet<T> params;
};

/// M = {F_R, F_E, C}.
template <typename T>
struct ModelState {
  ParamSet<T> params;
};

template <typename T>
struct Networks {
  EncoderParams<T> encoder;
  SAParams<T> attention;
  ExtractorParams<T> extractor;
  ModelState<T> model;

  /// All four sets in one container (names are prefixed and disjoint).
  ParamSet<T> all() const;
  static Networks from_all(const NetConfig& cfg, const ParamSet<T>& all);
};

/// Kaiming-uniform fan-in weights, zero biases, drawn in a fixed order from `rng`.
/// Values are generated in double and rounded, so float and double networks
/// built from the same seed agree up to rounding.
template <typename T>
Networks<T> init_networks(const NetConfig& cfg, std::mt19937_64& rng);

template <typename T>
Var<T> encode(const NetConfig& cfg, const VarMap<T>& p_r, Var<T> images);

/// Attention over the w*h positions of each sample. Softmax normalizes over the
/// key index i for every query j. When `attention` is given it receives the
/// [B, w*h (j), w*h (i)] weights.
template <typename T>
Var<T> self_attention(const NetConfig& cfg, const VarMap<T>& sa, Var<T> f, Var<T>* attention = nullptr);

/// flatten(f') -> F_R -> relu -> C
template <typename T>
Var<T> classify_r_path(const NetConfig& cfg, const VarMap<T>& m, Var<T> f_prime);

/// P_E(e) -> flatten -> F_E -> relu -> C
template <typename T>
Var<T> classify_e_path(const NetConfig& cfg, const VarMap<T>& m, const VarMap<T>& p_e, Var<T> e);

// Inference helpers: build a throwaway tape with every parameter held constant.

template <typename T>
Tensor<T> refined_features(const NetConfig& cfg, const Networks<T>& nets, const Tensor<T>& images);

template <typename T>
Tensor<T> r_path_logits(const NetConfig& cfg, const Networks<T>& nets, const Tensor<T>& images);

template <typename T>
Tensor<T> e_path_logits(const NetConfig& cfg, const Networks<T>& nets, const Tensor<T>& features);

}  // namespace sbx
