#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "sbx/tensor.hpp"

namespace sbx {

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps), one element at a time.
template <typename T>
Tensor<T> finite_diff(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T eps) {
  if (!(eps > T{0})) throw std::invalid_argument("finite_diff: eps must be positive");
  Tensor<T> grad(x.shape());
  Tensor<T> probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T orig = probe[i];
    probe[i] = orig + eps;
    const T up = f(probe);
    probe[i] = orig - eps;
    const T down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (T{2} * eps);
  }
  return grad;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps near-zero
/// entries from dominating.
template <typename T>
T max_relative_error(const Tensor<T>& a, const Tensor<T>& b, T floor = T{1e-6}) {
  if (a.shape() != b.shape()) throw std::invalid_argument("max_relative_error: shape mismatch");
  T worst{0};
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const T denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace sbx
