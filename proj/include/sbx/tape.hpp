#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sbx/tensor.hpp"

namespace sbx {

template <typename T>
class Tape;

/// Handle to a tensor recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  std::size_t id() const { return id_; }
  Tape<T>* tape() const { return tape_; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient of a scalar loss with respect to each named parameter.
template <typename T>
using Gradients = std::map<std::string, Tensor<T>>;

/// Ordered record of primitive operations. backward() replays the record once,
/// last operation first. Ops whose inputs all lack requires_grad store their
/// value but no backward closure, so a tape with no parameters is plain inference.
template <typename T>
class Tape {
 public:
  /// Accumulates into grad_in[k] (null when input k needs no gradient).
  using BackwardFn = std::function<void(const Tensor<T>& grad_out, std::span<Tensor<T>*> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a trainable leaf. Names must be unique on the tape.
  Var<T> param(const std::string& name, const Tensor<T>& value);
  Var<T> constant(Tensor<T> value);

  Var<T> record(Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn fn);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  /// Number of nodes that carry a backward closure.
  std::size_t recorded_ops() const;

  /// Reverse pass from a scalar loss. Every registered parameter gets an entry;
  /// unreachable ones are zero. A tape can be replayed once.
  Gradients<T> backward(Var<T> loss);

 private:
  struct Node {
    Tensor<T> value;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn fn;
  };

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, std::size_t>> params_;
  bool consumed_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

// Differentiable primitives. Shape rules are checked before any arithmetic and
// non-finite inputs are rejected with std::invalid_argument.

/// [M,K] x [K,N] -> [M,N]
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
/// [B,M,K] x [B,K,N] -> [B,M,N]
template <typename T>
Var<T> bmm(Var<T> a, Var<T> b);
/// [B,M,N] -> [B,N,M]
template <typename T>
Var<T> transpose_last2(Var<T> x);
/// Elementwise, identical shapes.
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
/// x[..., N] + bias[N] along the last axis.
template <typename T>
Var<T> add_bias(Var<T> x, Var<T> bias);
template <typename T>
Var<T> scale(Var<T> x, T s);
template <typename T>
Var<T> relu(Var<T> x);
template <typename T>
Var<T> reshape(Var<T> x, Shape shape);
/// [B, ...] -> [B, prod(...)]
template <typename T>
Var<T> flatten(Var<T> x);
/// Softmax over the last axis, max-subtracted.
template <typename T>
Var<T> softmax_last(Var<T> x);
/// x [B,H,W,C], w [k,k,C,O], bias [O], zero padding `pad`, stride `stride` -> [B,H',W',O]
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, std::size_t stride, std::size_t pad);
/// 1x1 convolution over NHWC: w [C,O], bias [O] (bias may be absent).
template <typename T>
Var<T> conv1x1(Var<T> x, Var<T> w, const Var<T>* bias);
/// Scalar reductions, returned with shape [1].
template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> max_all(Var<T> x);
template <typename T>
Var<T> min_all(Var<T> x);
/// Mean over the batch of -log softmax(logits)[label]. logits [B,C].
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::uint16_t> labels);

/// Per-row cross-entropy on plain values (no tape).
template <typename T>
std::vector<T> cross_entropy_per_sample(const Tensor<T>& logits, std::span<const std::uint16_t> labels);

}  // namespace sbx
