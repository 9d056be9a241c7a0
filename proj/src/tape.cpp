#include "sbx/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sbx {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

template <typename T>
void require_finite(const Var<T>& v, const char* op) {
  if (!v.value().all_finite()) {
    throw std::invalid_argument(std::string(op) + ": non-finite input");
  }
}

template <typename T>
void accumulate(Tensor<T>* dst, const Tensor<T>& src) {
  if (!dst) return;
  auto d = dst->data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// c[M,N] += a[M,K] * b[K,N], raw row-major buffers.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T{0}) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[M,K] += a[M,N] * b[K,N]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc{0};
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// c[K,N] += a[M,K]^T * b[M,N]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T{0}) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

// ---- Tape ------------------------------------------------------------------

template <typename T>
Var<T> Tape<T>::param(const std::string& name, const Tensor<T>& value) {
  for (const auto& [n, id] : params_) {
    if (n == name) throw std::invalid_argument("tape: duplicate parameter " + name);
  }
  Node node;
  node.value = value;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  params_.emplace_back(name, nodes_.size() - 1);
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn fn) {
  if (consumed_) throw std::logic_error("tape: recording after backward");
  Node node;
  node.value = std::move(value);
  for (const auto& in : inputs) {
    if (in.tape() != this) throw std::invalid_argument("tape: input recorded on a different tape");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.fn = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
std::size_t Tape<T>::recorded_ops() const {
  std::size_t n = 0;
  for (const auto& node : nodes_) n += node.fn ? 1 : 0;
  return n;
}

template <typename T>
Gradients<T> Tape<T>::backward(Var<T> loss) {
  if (consumed_) throw std::logic_error("tape: backward called twice on the same tape");
  if (loss.tape() != this) throw std::invalid_argument("tape: loss recorded on a different tape");
  if (loss.value().numel() != 1) {
    throw std::invalid_argument("tape: backward needs a scalar loss, got " + shape_str(loss.shape()));
  }
  consumed_ = true;

  std::vector<Tensor<T>> grads(nodes_.size());
  if (nodes_[loss.id()].requires_grad) {
    grads[loss.id()] = Tensor<T>(loss.shape(), T{1});
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (!node.fn || grads[id].empty()) continue;
      std::vector<Tensor<T>*> grad_in(node.inputs.size(), nullptr);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const std::size_t in = node.inputs[k];
        if (!nodes_[in].requires_grad) continue;
        if (grads[in].empty()) grads[in] = Tensor<T>(nodes_[in].value.shape());
        grad_in[k] = &grads[in];
      }
      node.fn(grads[id], grad_in);
    }
  }

  Gradients<T> out;
  for (const auto& [name, id] : params_) {
    out.emplace(name, grads[id].empty() ? Tensor<T>(nodes_[id].value.shape()) : std::move(grads[id]));
  }
  return out;
}

// ---- primitives ------------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  require(as.size() == 2 && bs.size() == 2 && as[1] == bs[0],
          "matmul: incompatible shapes " + shape_str(as) + " x " + shape_str(bs));
  require_finite(a, "matmul");
  require_finite(b, "matmul");
  const std::size_t m = as[0], k = as[1], n = bs[1];
  Tensor<T> out(Shape{m, n});
  gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
  Tape<T>* tape = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return tape->record(std::move(out), {a, b}, [tape, ia, ib, m, k, n](const Tensor<T>& g, std::span<Tensor<T>*> gin) {
    if (gin[0]) gemm_nt(g.data().data(), tape->value(ib).data().data(), gin[0]->data().data(), m, n, k);
    if (gin[1]) gemm_tn(tape->value(ia).data().data(), g.data().data(), gin[1]->data().data(), m, k, n);
  });
}

template <typename T>
Var<T> bmm(Var<T> a, Var<T> b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  require(as.size() == 3 && bs.size() == 3 && as[0] == bs[0] && as[2] == bs[1],
          "bmm: incompatible shapes " + shape_str(as) + " x " + shape_str(bs));
  require_finite(a, "bmm");
  require_finite(b, "bmm");
  const std::size_t batch = as[0], m = as[1], k = as[2], n = bs[2];
  Tensor<T> out(Shape{batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_nn(a.value().data().data() + i * m * k, b.value().data().data() + i * k * n,
            out.data().data() + i * m * n, m, k, n);
  }
  Tape<T>* tape = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return tape->record(std::move(out), {a, b},
                      [tape, ia, ib, batch, m, k, n](const Tensor<T>& g, std::span<Tensor<T>*> gin) {
                        for (std::size_t i = 0; i < batch; ++i) {
                          const T* gp = g.data().data() + i * m * n;
                          if (gin[0]) {
                            gemm_nt(gp, tape->value(ib).data().data() + i * k * n,
                                    gin[0]->data().data() + i * m * k, m, n, k);
                          }
                          if (gin[1]) {
                            gemm_tn(tape->value(ia).data().data() + i * m * k, gp,
                                    gin[1]->data().data() + i * k * n, m, k, n);
                          }
                        }
                      });
}

template <typename T>
Var<T> transpose_last2(Var<T> x) {
  const auto& xs = x.shape();
  require(xs.size() == 3, "transpose_last2: expected rank 3, got " + shape_str(xs));
  require_finite(x, "transpose_last2");
  const std::size_t batch = xs[0], m = xs[1], n = xs[2];
  Tensor<T> out(Shape{batch, n, m});
  const auto src = x.value().data();
  auto dst = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dst[(b * n + j) * m + i] = src[(b * m + i) * n + j];
  return x.tape()->record(std::move(out), {x}, [batch, m, n](const Tensor<T>& g, std::span<Tensor<T>*> gin) {
    auto gs = g.data();
    auto gx = gin[0]->data();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[(b * m + i) * n + j] += gs[(b * n + j) * m + i];
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  require_finite(a, "add");
  require_finite(b, "add");
  Tensor<T> out = a.value();
  accumulate(&out, b.value());
  return a.tape()->record(std::move(out), {a, b}, [](const Tensor<T>& g, std::span<Tensor<T>*> gin) {
    accumulate(gin[0], g);
    accumulate(gin[1], g);
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  require_finite(a, "mul");
  require_finite(b, "mul");
  Tensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  Tape<T>* tape = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return tape->record(std::move(out), {a, b}, [tape, ia, ib](const Tensor<T>& g, std::span<Tensor<T>*> gin) {
    auto gs = g.data();
    if (gin[0]) {
      auto bv = tape->value(ib).data();
      auto gx = gin[0]->data();
      for (std::size_t i = 0; i < gs.size(); ++i) gx[i] += gs[i] * bv[i];
    }
    if (gin[1]) {
      auto av = tape->value(ia).data();
      auto gx = gin[1]->data();
      for (std::size_t i = 0; i < gs.size(); ++i) gx[i] += gs[i] * av[i];
    }
  });
}

template <typename T>
Var<T> add_bias(Var<T> x, Var<T> bias) {
  const auto& xs = x.shape();
  require(bias.shape().size() == 1 && bias.shape()[0] == xs.back(),
          "add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " + shape_str(xs));
  require_finite(x, "add_bias");
  require_finite(bias, "add_bias");
  const std::size_t n = xs.back();
  Tensor<T> out = x.value();
  auto o = out.data();
  auto bv = bias.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i % n];
  return x.tape()->record(std::move(out), {x, bias}, [n](const Tensor<T>& g, std::span<Tensor<T>*> gin) {
    accumulate(gin[0], g);
    if (gin[1]) {
      auto gs = g.data();
      auto gb = gin[1]->data();
      for (std::size_t i = 0; i < gs.size(); ++i) gb[i % n] += gs[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T s) {
  require_finite(x, "scale");
  require(std::isfinite(s), "scale: non-finite factor");
  Tensor<T> out = x.value();
  for (T& v : out.data()) v *= s;
  return x.tape()->record(std::move(out), {x}, [s](const Tensor<T>& g, std::span<Tensor<T>*> gin) {
    auto gs = g.data();
    auto gx = gin[0]->data();
    for (std::size_t i = 0; i < gs.size(); ++i) gx[i] += s * gs[i];
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  require_finite(x, "relu");
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = v > T{0} ? v : T{0};
  Tape<T>* tape = x.tape();
  const std::size_t ix = x.id();
  return tape->record(std::move(out), {x}, [tape, ix](const Tensor<T>& g, std::span<Tensor<T>*> gin) {
    auto xv = tape->value(ix).data();
    auto gs = g.data();
    auto gx = gin[0]->data();
    for (std::size_t i = 0; i < gs.size(); ++i) {
      if (xv[i] > T{0}) gx[i] += gs[i];
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  require(shape_numel(shape) == x.value().numel(),
          "reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  return x.tape()->record(x.value().reshaped(std::move(shape)), {x},
                          [](const Tensor<T>& g, std::span<Tensor<T>*> gin) { accumulate(gin[0], g); });
}

template <typename T>
Var<T> flatten(Var<T> x) {
  const auto& xs = x.shape();
  require(xs.size() >= 2, "flatten: expected a batch axis, got " + shape_str(xs));
  return reshape(x, Shape{xs[0], x.value().numel() / xs[0]});
}

template <typename T>
Var<T> softmax_last(Var<T> x) {
  require_finite(x, "softmax");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.value().numel() / n;
  Tensor<T> out = x.value();
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = o.data() + r * n;
    const T mx = *std::max_element(row, row + n);
    T total{0};
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      total += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= total;
  }
  Tape<T>* tape = x.tape();
  // The closure reads the softmax output, which lands at the next node id.
  const std::size_t iy = tape->size();
  return tape->record(std::move(out), {x}, [tape, iy, rows, n](const Tensor<T>& g, std::span<Tensor<T>*> gin) {
    auto yv = tape->value(iy).data();
    auto gs = g.data();
    auto gx = gin[0]->data();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot{0};
      for (std::size_t j = 0; j < n; ++j) dot += gs[r * n + j] * yv[r * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += yv[r * n + j] * (gs[r * n + j] - dot);
    }
  });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, std::size_t stride, std::size_t pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  require(xs.size() == 4, "conv2d: input must be [B,H,W,C], got " + shape_str(xs));
  require(ws.size() == 4 && ws[0] == ws[1] && ws[2] == xs[3],
          "conv2d: weight " + shape_str(ws) + " incompatible with input " + shape_str(xs));
  require(bias.shape().size() == 1 && bias.shape()[0] == ws[3], "conv2d: bias must be [" + std::to_string(ws[3]) + "]");
  require(stride >= 1, "conv2d: stride must be positive");
  require(xs[1] + 2 * pad >= ws[0] && xs[2] + 2 * pad >= ws[1], "conv2d: kernel larger than padded input");
  require_finite(x, "conv2d");
  require_finite(w, "conv2d");
  require_finite(bias, "conv2d");

  const std::size_t batch = xs[0], in_h = xs[1], in_w = xs[2], in_c = xs[3];
  const std::size_t k = ws[0], out_c = ws[3];
  const std::size_t out_h = (in_h + 2 * pad - k) / stride + 1;
  const std::size_t out_w = (in_w + 2 * pad - k) / stride + 1;

  Tensor<T> out(Shape{batch, out_h, out_w, out_c});
  {
    const T* xv = x.value().data().data();
    const T* wv = w.value().data().data();
    const T* bv = bias.value().data().data();
    T* ov = out.data().data();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t oy = 0; oy < out_h; ++oy)
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          T* orow = ov + ((b * out_h + oy) * out_w + ox) * out_c;
          for (std::size_t o = 0; o < out_c; ++o) orow[o] = bv[o];
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w)) continue;
              const T* xrow = xv + ((b * in_h + iy) * in_w + ix) * in_c;
              const T* wk = wv + (ky * k + kx) * in_c * out_c;
              for (std::size_t c = 0; c < in_c; ++c) {
                const T xval = xrow[c];
                if (xval == T{0}) continue;
                const T* wrow = wk + c * out_c;
                for (std::size_t o = 0; o < out_c; ++o) orow[o] += xval * wrow[o];
              }
            }
          }
        }
  }

  Tape<T>* tape = x.tape();
  const std::size_t ixid = x.id(), iwid = w.id();
  return tape->record(
      std::move(out), {x, w, bias},
      [=](const Tensor<T>& g, std::span<Tensor<T>*> gin) {
        const T* xv = tape->value(ixid).data().data();
        const T* wv = tape->value(iwid).data().data();
        const T* gv = g.data().data();
        T* gx = gin[0] ? gin[0]->data().data() : nullptr;
        T* gw = gin[1] ? gin[1]->data().data() : nullptr;
        T* gb = gin[2] ? gin[2]->data().data() : nullptr;
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t oy = 0; oy < out_h; ++oy)
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const T* grow = gv + ((b * out_h + oy) * out_w + ox) * out_c;
              if (gb) {
                for (std::size_t o = 0; o < out_c; ++o) gb[o] += grow[o];
              }
              for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w)) continue;
                  const std::size_t xoff = ((b * in_h + iy) * in_w + ix) * in_c;
                  const std::size_t woff = (ky * k + kx) * in_c * out_c;
                  for (std::size_t c = 0; c < in_c; ++c) {
                    const T* wrow = wv + woff + c * out_c;
                    if (gx) {
                      T acc{0};
                      for (std::size_t o = 0; o < out_c; ++o) acc += grow[o] * wrow[o];
                      gx[xoff + c] += acc;
                    }
                    if (gw) {
                      const T xval = xv[xoff + c];
                      T* gwrow = gw + woff + c * out_c;
                      for (std::size_t o = 0; o < out_c; ++o) gwrow[o] += xval * grow[o];
                    }
                  }
                }
              }
            }
      });
}

template <typename T>
Var<T> conv1x1(Var<T> x, Var<T> w, const Var<T>* bias) {
  const Shape xs = x.shape();
  require(xs.size() == 4, "conv1x1: input must be [B,H,W,C], got " + shape_str(xs));
  require(w.shape().size() == 2 && w.shape()[0] == xs[3],
          "conv1x1: weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(xs));
  const std::size_t out_c = w.shape()[1];
  Var<T> rows = reshape(x, Shape{xs[0] * xs[1] * xs[2], xs[3]});
  Var<T> y = matmul(rows, w);
  if (bias) y = add_bias(y, *bias);
  return reshape(y, Shape{xs[0], xs[1], xs[2], out_c});
}

template <typename T>
Var<T> sum(Var<T> x) {
  require_finite(x, "sum");
  T total{0};
  for (T v : x.value().data()) total += v;
  return x.tape()->record(Tensor<T>::scalar(total), {x}, [](const Tensor<T>& g, std::span<Tensor<T>*> gin) {
    for (T& v : gin[0]->data()) v += g[0];
  });
}

namespace {

template <typename T, typename Cmp>
Var<T> extreme_all(Var<T> x, Cmp cmp, const char* op) {
  require_finite(x, op);
  auto xv = x.value().data();
  std::size_t best = 0;
  for (std::size_t i = 1; i < xv.size(); ++i) {
    if (cmp(xv[i], xv[best])) best = i;
  }
  return x.tape()->record(Tensor<T>::scalar(xv[best]), {x}, [best](const Tensor<T>& g, std::span<Tensor<T>*> gin) {
    gin[0]->data()[best] += g[0];
  });
}

}  // namespace

template <typename T>
Var<T> max_all(Var<T> x) {
  return extreme_all(x, [](T a, T b) { return a > b; }, "max_all");
}

template <typename T>
Var<T> min_all(Var<T> x) {
  return extreme_all(x, [](T a, T b) { return a < b; }, "min_all");
}

template <typename T>
std::vector<T> cross_entropy_per_sample(const Tensor<T>& logits, std::span<const std::uint16_t> labels) {
  require(logits.rank() == 2, "cross_entropy: logits must be [B,C], got " + shape_str(logits.shape()));
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  require(labels.size() == batch, "cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                                      std::to_string(batch));
  std::vector<T> out(batch);
  auto lv = logits.data();
  for (std::size_t r = 0; r < batch; ++r) {
    require(labels[r] < classes, "cross_entropy: label " + std::to_string(labels[r]) + " out of range for " +
                                     std::to_string(classes) + " classes");
    const T* row = lv.data() + r * classes;
    const T mx = *std::max_element(row, row + classes);
    T total{0};
    for (std::size_t j = 0; j < classes; ++j) total += std::exp(row[j] - mx);
    out[r] = mx + std::log(total) - row[labels[r]];
  }
  return out;
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::uint16_t> labels) {
  require_finite(logits, "cross_entropy");
  const std::vector<T> per = cross_entropy_per_sample(logits.value(), labels);
  const std::size_t batch = per.size(), classes = logits.shape()[1];
  T total{0};
  for (T v : per) total += v;
  std::vector<std::uint16_t> lab(labels.begin(), labels.end());
  Tape<T>* tape = logits.tape();
  const std::size_t il = logits.id();
  return tape->record(Tensor<T>::scalar(total / static_cast<T>(batch)), {logits},
                      [tape, il, lab = std::move(lab), batch, classes](const Tensor<T>& g, std::span<Tensor<T>*> gin) {
                        auto lv = tape->value(il).data();
                        auto gx = gin[0]->data();
                        const T coef = g[0] / static_cast<T>(batch);
                        for (std::size_t r = 0; r < batch; ++r) {
                          const T* row = lv.data() + r * classes;
                          const T mx = *std::max_element(row, row + classes);
                          T total{0};
                          for (std::size_t j = 0; j < classes; ++j) total += std::exp(row[j] - mx);
                          for (std::size_t j = 0; j < classes; ++j) {
                            T p = std::exp(row[j] - mx) / total;
                            if (j == lab[r]) p -= T{1};
                            gx[r * classes + j] += coef * p;
                          }
                        }
                      });
}

#define SBX_INSTANTIATE_TAPE(T)                                                                 \
  template class Tape<T>;                                                                       \
  template Var<T> matmul(Var<T>, Var<T>);                                                       \
  template Var<T> bmm(Var<T>, Var<T>);                                                          \
  template Var<T> transpose_last2(Var<T>);                                                      \
  template Var<T> add(Var<T>, Var<T>);                                                          \
  template Var<T> mul(Var<T>, Var<T>);                                                          \
  template Var<T> add_bias(Var<T>, Var<T>);                                                     \
  template Var<T> scale(Var<T>, T);                                                             \
  template Var<T> relu(Var<T>);                                                                 \
  template Var<T> reshape(Var<T>, Shape);                                                       \
  template Var<T> flatten(Var<T>);                                                              \
  template Var<T> softmax_last(Var<T>);                                                         \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t);                     \
  template Var<T> conv1x1(Var<T>, Var<T>, const Var<T>*);                                       \
  template Var<T> sum(Var<T>);                                                                  \
  template Var<T> max_all(Var<T>);                                                              \
  template Var<T> min_all(Var<T>);                                                              \
  template Var<T> cross_entropy(Var<T>, std::span<const std::uint16_t>);                        \
  template std::vector<T> cross_entropy_per_sample(const Tensor<T>&, std::span<const std::uint16_t>);

SBX_INSTANTIATE_TAPE(float)
SBX_INSTANTIATE_TAPE(double)

}  // namespace sbx
