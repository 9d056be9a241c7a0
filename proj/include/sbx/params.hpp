#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "sbx/tape.hpp"
#include "sbx/tensor.hpp"

namespace sbx {

/// Named parameter tensors, iterated in name order.
template <typename T>
class ParamSet {
 public:
  using Map = std::map<std::string, Tensor<T>>;

  void set(const std::string& name, Tensor<T> value) { entries_[name] = std::move(value); }
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const Tensor<T>& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("params: no tensor named " + name);
    return it->second;
  }
  Tensor<T>& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("params: no tensor named " + name);
    return it->second;
  }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.numel();
    return n;
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& [name, t] : entries_) out.set(name, t.template cast<U>());
    return out;
  }

  /// Union of two sets with disjoint names.
  void merge(const ParamSet& other) {
    for (const auto& [name, t] : other) {
      if (contains(name)) throw std::invalid_argument("params: duplicate name " + name);
      entries_.emplace(name, t);
    }
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) { return a.entries_ == b.entries_; }

 private:
  Map entries_;
};

/// Tape handles for a bound ParamSet.
template <typename T>
using VarMap = std::map<std::string, Var<T>>;

/// Puts every tensor of `params` on the tape, as trainable leaves or constants.
template <typename T>
VarMap<T> bind(Tape<T>& tape, const ParamSet<T>& params, bool trainable) {
  VarMap<T> out;
  for (const auto& [name, t] : params) {
    out.emplace(name, trainable ? tape.param(name, t) : tape.constant(t));
  }
  return out;
}

/// p <- p - lr * g for each tensor in `params`. Every parameter needs a gradient
/// of matching shape; extra gradients are ignored.
template <typename T>
void sgd_step(ParamSet<T>& params, const Gradients<T>& grads, T lr) {
  if (!(lr > T{0})) throw std::invalid_argument("sgd_step: learning rate must be positive");
  for (auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw std::invalid_argument("sgd_step: missing gradient for " + name);
    if (it->second.shape() != p.shape()) throw std::invalid_argument("sgd_step: gradient shape mismatch for " + name);
  }
  for (auto& [name, p] : params) {
    auto pv = p.data();
    auto gv = grads.at(name).data();
    for (std::size_t i = 0; i < pv.size(); ++i) pv[i] -= lr * gv[i];
  }
}

}  // namespace sbx
