#include "sbx/nets.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sbx {

void NetConfig::validate() const {
  if (input_height == 0 || input_width == 0 || input_channels == 0 || conv1_channels == 0 || feature_channels == 0 ||
      hidden == 0 || num_classes == 0) {
    throw std::invalid_argument("net config: all sizes must be positive");
  }
  if (positions() < 2) {
    throw std::invalid_argument("net config: attention needs at least 2 feature positions, got " +
                                std::to_string(feature_height()) + "x" + std::to_string(feature_width()));
  }
}

namespace {

template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> t(std::move(shape));
  for (T& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
const Var<T>& lookup(const VarMap<T>& vars, const std::string& name) {
  auto it = vars.find(name);
  if (it == vars.end()) throw std::invalid_argument("missing parameter " + name);
  return it->second;
}

template <typename T>
Var<T> dense(const VarMap<T>& vars, const std::string& prefix, Var<T> x) {
  return add_bias(matmul(x, lookup(vars, prefix + ".weight")), lookup(vars, prefix + ".bias"));
}

}  // namespace

template <typename T>
ParamSet<T> Networks<T>::all() const {
  ParamSet<T> out = encoder.params;
  out.merge(attention.params);
  out.merge(extractor.params);
  out.merge(model.params);
  return out;
}

template <typename T>
Networks<T> Networks<T>::from_all(const NetConfig& cfg, const ParamSet<T>& all) {
  std::mt19937_64 rng(0);
  Networks<T> nets = init_networks<T>(cfg, rng);
  auto fill = [&](ParamSet<T>& dst) {
    for (auto& [name, t] : dst) {
      const Tensor<T>& src = all.at(name);
      if (src.shape() != t.shape()) {
        throw std::invalid_argument("parameter " + name + " has shape " + shape_str(src.shape()) + ", expected " +
                                    shape_str(t.shape()));
      }
      t = src;
    }
  };
  fill(nets.encoder.params);
  fill(nets.attention.params);
  fill(nets.extractor.params);
  fill(nets.model.params);
  if (all.size() != nets.all().size()) throw std::invalid_argument("parameter set has unexpected entries");
  return nets;
}

template <typename T>
Networks<T> init_networks(const NetConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t c_in = cfg.input_channels, c1 = cfg.conv1_channels, d = cfg.feature_channels;
  const std::size_t dk = cfg.key_channels(), dv = cfg.value_channels();
  const std::size_t flat = cfg.feature_numel();

  Networks<T> n;
  auto& enc = n.encoder.params;
  enc.set("p_r.conv1.weight", kaiming_uniform<T>({3, 3, c_in, c1}, 9 * c_in, rng));
  enc.set("p_r.conv1.bias", Tensor<T>(Shape{c1}));
  enc.set("p_r.conv2.weight", kaiming_uniform<T>({3, 3, c1, d}, 9 * c1, rng));
  enc.set("p_r.conv2.bias", Tensor<T>(Shape{d}));

  auto& sa = n.attention.params;
  sa.set("sa.w_k", kaiming_uniform<T>({d, dk}, d, rng));
  sa.set("sa.w_q", kaiming_uniform<T>({d, dk}, d, rng));
  sa.set("sa.v.weight", kaiming_uniform<T>({d, dv}, d, rng));
  sa.set("sa.v.bias", Tensor<T>(Shape{dv}));
  sa.set("sa.i.weight", kaiming_uniform<T>({dv, d}, dv, rng));
  sa.set("sa.i.bias", Tensor<T>(Shape{d}));

  if (cfg.extractor_adapter) {
    n.extractor.params.set("p_e.weight", kaiming_uniform<T>({d, d}, d, rng));
    n.extractor.params.set("p_e.bias", Tensor<T>(Shape{d}));
  }

  auto& m = n.model.params;
  m.set("f_r.weight", kaiming_uniform<T>({flat, cfg.hidden}, flat, rng));
  m.set("f_r.bias", Tensor<T>(Shape{cfg.hidden}));
  m.set("f_e.weight", kaiming_uniform<T>({flat, cfg.hidden}, flat, rng));
  m.set("f_e.bias", Tensor<T>(Shape{cfg.hidden}));
  m.set("c.weight", kaiming_uniform<T>({cfg.hidden, cfg.num_classes}, cfg.hidden, rng));
  m.set("c.bias", Tensor<T>(Shape{cfg.num_classes}));
  return n;
}

template <typename T>
Var<T> encode(const NetConfig& cfg, const VarMap<T>& p_r, Var<T> images) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != cfg.input_height || s[2] != cfg.input_width || s[3] != cfg.input_channels) {
    throw std::invalid_argument("encode: expected images " + shape_str(cfg.image_shape(s.empty() ? 0 : s[0])) +
                                ", got " + shape_str(s));
  }
  Var<T> h = relu(conv2d(images, lookup(p_r, "p_r.conv1.weight"), lookup(p_r, "p_r.conv1.bias"), 2, 1));
  return relu(conv2d(h, lookup(p_r, "p_r.conv2.weight"), lookup(p_r, "p_r.conv2.bias"), 2, 1));
}

template <typename T>
Var<T> self_attention(const NetConfig& cfg, const VarMap<T>& sa, Var<T> f, Var<T>* attention) {
  const Shape s = f.shape();
  if (s.size() != 4 || s[3] != cfg.feature_channels) {
    throw std::invalid_argument("self_attention: expected [B,w,h," + std::to_string(cfg.feature_channels) +
                                "] features, got " + shape_str(s));
  }
  const std::size_t batch = s[0], positions = s[1] * s[2];
  if (positions < 2) throw std::invalid_argument("self_attention: needs at least 2 positions, got " + shape_str(s));
  const std::size_t dk = cfg.key_channels(), dv = cfg.value_channels();

  Var<T> keys = reshape(conv1x1(f, lookup(sa, "sa.w_k"), static_cast<const Var<T>*>(nullptr)), Shape{batch, positions, dk});
  Var<T> queries = reshape(conv1x1(f, lookup(sa, "sa.w_q"), static_cast<const Var<T>*>(nullptr)), Shape{batch, positions, dk});
  // scores[b, j, i] = K(f_i) . Q(f_j)
  Var<T> scores = bmm(queries, transpose_last2(keys));
  Var<T> weights = softmax_last(scores);
  if (attention) *attention = weights;

  const Var<T>& v_bias = lookup(sa, "sa.v.bias");
  Var<T> values = reshape(conv1x1(f, lookup(sa, "sa.v.weight"), &v_bias), Shape{batch, positions, dv});
  Var<T> mixed = reshape(bmm(weights, values), Shape{batch, s[1], s[2], dv});
  const Var<T>& i_bias = lookup(sa, "sa.i.bias");
  Var<T> out = conv1x1(mixed, lookup(sa, "sa.i.weight"), &i_bias);
  if (cfg.attention_residual) out = add(out, f);
  return out;
}

namespace {

template <typename T>
void check_features(const NetConfig& cfg, const Var<T>& f, const char* op) {
  const Shape& s = f.shape();
  if (s.size() != 4 || s[1] != cfg.feature_height() || s[2] != cfg.feature_width() || s[3] != cfg.feature_channels) {
    throw std::invalid_argument(std::string(op) + ": expected features " +
                                shape_str(cfg.feature_shape(s.empty() ? 0 : s[0])) + ", got " + shape_str(s));
  }
}

}  // namespace

template <typename T>
Var<T> classify_r_path(const NetConfig& cfg, const VarMap<T>& m, Var<T> f_prime) {
  check_features(cfg, f_prime, "classify_r_path");
  Var<T> h = relu(dense(m, "f_r", flatten(f_prime)));
  return dense(m, "c", h);
}

template <typename T>
Var<T> classify_e_path(const NetConfig& cfg, const VarMap<T>& m, const VarMap<T>& p_e, Var<T> e) {
  check_features(cfg, e, "classify_e_path");
  Var<T> x = e;
  if (cfg.extractor_adapter) {
    const Var<T>& bias = lookup(p_e, "p_e.bias");
    x = conv1x1(e, lookup(p_e, "p_e.weight"), &bias);
  }
  Var<T> h = relu(dense(m, "f_e", flatten(x)));
  return dense(m, "c", h);
}

template <typename T>
Tensor<T> refined_features(const NetConfig& cfg, const Networks<T>& nets, const Tensor<T>& images) {
  Tape<T> tape;
  auto p_r = bind(tape, nets.encoder.params, false);
  auto sa = bind(tape, nets.attention.params, false);
  return self_attention(cfg, sa, encode(cfg, p_r, tape.constant(images))).value();
}

template <typename T>
Tensor<T> r_path_logits(const NetConfig& cfg, const Networks<T>& nets, const Tensor<T>& images) {
  Tape<T> tape;
  auto p_r = bind(tape, nets.encoder.params, false);
  auto sa = bind(tape, nets.attention.params, false);
  auto m = bind(tape, nets.model.params, false);
  return classify_r_path(cfg, m, self_attention(cfg, sa, encode(cfg, p_r, tape.constant(images)))).value();
}

template <typename T>
Tensor<T> e_path_logits(const NetConfig& cfg, const Networks<T>& nets, const Tensor<T>& features) {
  Tape<T> tape;
  auto p_e = bind(tape, nets.extractor.params, false);
  auto m = bind(tape, nets.model.params, false);
  return classify_e_path(cfg, m, p_e, tape.constant(features)).value();
}

#define SBX_INSTANTIATE_NETS(T)                                                                    \
  template struct Networks<T>;                                                                     \
  template Networks<T> init_networks<T>(const NetConfig&, std::mt19937_64&);                       \
  template Var<T> encode(const NetConfig&, const VarMap<T>&, Var<T>);                              \
  template Var<T> self_attention(const NetConfig&, const VarMap<T>&, Var<T>, Var<T>*);             \
  template Var<T> classify_r_path(const NetConfig&, const VarMap<T>&, Var<T>);                     \
  template Var<T> classify_e_path(const NetConfig&, const VarMap<T>&, const VarMap<T>&, Var<T>);   \
  template Tensor<T> refined_features(const NetConfig&, const Networks<T>&, const Tensor<T>&);     \
  template Tensor<T> r_path_logits(const NetConfig&, const Networks<T>&, const Tensor<T>&);        \
  template Tensor<T> e_path_logits(const NetConfig&, const Networks<T>&, const Tensor<T>&);

SBX_INSTANTIATE_NETS(float)
SBX_INSTANTIATE_NETS(double)

}  // namespace sbx
