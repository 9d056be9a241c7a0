#include "sbx/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sbx {

std::string to_string(Pipeline p) {
  switch (p) {
    case Pipeline::kExperienceBlending:
      return "ours";
    case Pipeline::kReplayOnly:
      return "replay-only";
    case Pipeline::kFtfOnly:
      return "ftf-only";
  }
  return "?";
}

Pipeline parse_pipeline(const std::string& s) {
  if (s == "ours") return Pipeline::kExperienceBlending;
  if (s == "replay-only") return Pipeline::kReplayOnly;
  if (s == "ftf-only") return Pipeline::kFtfOnly;
  throw std::invalid_argument("unknown baseline \"" + s + "\" (expected ours, ftf-only or replay-only)");
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("train.alpha must be in [0, 1]");
  if (!(lr > 0.0)) throw std::invalid_argument("train.lr must be positive");
  if (epochs_per_task == 0) throw std::invalid_argument("train.epochs_per_task must be positive");
  if (batch_size == 0) throw std::invalid_argument("train.batch_size must be positive");
  if (inner_steps == 0) throw std::invalid_argument("train.inner_steps must be positive");
  if (!(lambda > 0.0)) throw std::invalid_argument("train.lambda must be positive");
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("train.beta must be in (0, 1]");
  if (replay_capacity == 0) throw std::invalid_argument("memory.replay_capacity must be positive");
  if (sbd_budget && *sbd_budget == 0) throw std::invalid_argument("memory.sbd_budget must be positive");
}

TrainerState make_trainer_state(const NetConfig& net, const TrainConfig& cfg) {
  cfg.validate();
  std::seed_seq init_seq{cfg.seed, std::uint64_t{0}};
  std::seed_seq sample_seq{cfg.seed, std::uint64_t{1}};
  std::seed_seq noise_seq{cfg.seed, std::uint64_t{2}};
  std::mt19937_64 init_rng(init_seq);
  return TrainerState{net,
                      init_networks<float>(net, init_rng),
                      ReplayMemory(cfg.replay_capacity),
                      SBDMemory(cfg.sbd_budget),
                      0,
                      true,
                      {},
                      std::mt19937_64(sample_seq),
                      std::mt19937_64(noise_seq),
                      0,
                      {}};
}

template <typename T>
ParamSet<T> blend(const ParamSet<T>& a, const ParamSet<T>& b, T alpha) {
  if (a.size() != b.size()) throw std::invalid_argument("blend: parameter sets differ in size");
  ParamSet<T> out;
  for (const auto& [name, ta] : a) {
    if (!b.contains(name)) throw std::invalid_argument("blend: " + name + " missing from second model");
    const Tensor<T>& tb = b.at(name);
    if (ta.shape() != tb.shape()) throw std::invalid_argument("blend: shape mismatch for " + name);
    Tensor<T> t(ta.shape());
    auto o = t.data();
    auto va = ta.data();
    auto vb = tb.data();
    const T keep = T{1} - alpha;
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = keep * va[i] + alpha * vb[i];
    out.set(name, std::move(t));
  }
  return out;
}

template ParamSet<float> blend(const ParamSet<float>&, const ParamSet<float>&, float);
template ParamSet<double> blend(const ParamSet<double>&, const ParamSet<double>&, double);

std::vector<std::size_t> draw_indices(std::mt19937_64& rng, std::size_t n, std::size_t count) {
  if (n == 0) throw std::invalid_argument("draw_indices: empty population");
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> out(count);
  for (auto& i : out) i = pick(rng);
  return out;
}

namespace {

std::vector<double> to_double(const std::vector<float>& v) { return std::vector<double>(v.begin(), v.end()); }

// First occurrence of each index, keeping the aligned value.
void dedupe(std::vector<std::size_t>& idx, std::vector<double>& values) {
  std::vector<std::size_t> out_idx;
  std::vector<double> out_val;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (std::find(out_idx.begin(), out_idx.end(), idx[k]) != out_idx.end()) continue;
    out_idx.push_back(idx[k]);
    out_val.push_back(values[k]);
  }
  idx = std::move(out_idx);
  values = std::move(out_val);
}

void update_replay_importance(TrainerState& st, const TrainConfig& cfg, std::vector<std::size_t> idx,
                              std::vector<double> before) {
  dedupe(idx, before);
  const Tensor<float> logits = r_path_logits(st.net, st.nets, st.replay.gather_images(idx));
  const auto after = to_double(cross_entropy_per_sample(logits, st.replay.gather_labels(idx)));
  st.replay.update_importance(idx, before, after, cfg.beta);
}

Tensor<float> image_row(const Tensor<float>& images, std::size_t i) {
  const std::size_t row = images.numel() / images.dim(0);
  std::vector<float> data(images.data().begin() + static_cast<std::ptrdiff_t>(i * row),
                          images.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * row));
  return Tensor<float>(Shape{1, images.dim(1), images.dim(2), images.dim(3)}, std::move(data));
}

// Batches built by hand may lack source rows; those samples are always new.
void offer_to_replay(ReplayMemory& r, const Batch& batch) {
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::optional<std::uint64_t> source;
    if (!batch.source.empty()) source = batch.source.at(i);
    r.insert(image_row(batch.images, i), batch.labels[i], source);
  }
}

// SGD on the r-path cross-entropy of (images, labels) for M, and for P_R/SA while trainable.
double r_path_sgd(TrainerState& st, const TrainConfig& cfg, const Tensor<float>& images,
                  const std::vector<Label>& labels, std::vector<double>* per_sample_before) {
  Gradients<float> grads;
  double loss_value = 0.0;
  {
    Tape<float> tape;
    auto p_r = bind(tape, st.nets.encoder.params, st.encoder_trainable);
    auto sa = bind(tape, st.nets.attention.params, st.encoder_trainable);
    auto m = bind(tape, st.nets.model.params, true);
    Var<float> logits = classify_r_path(st.net, m, self_attention(st.net, sa, encode(st.net, p_r, tape.constant(images))));
    Var<float> loss = cross_entropy(logits, labels);
    if (per_sample_before) *per_sample_before = to_double(cross_entropy_per_sample(logits.value(), labels));
    loss_value = loss.value()[0];
    grads = tape.backward(loss);
  }
  const float lr = static_cast<float>(cfg.lr);
  sgd_step(st.nets.model.params, grads, lr);
  if (st.encoder_trainable) {
    sgd_step(st.nets.encoder.params, grads, lr);
    sgd_step(st.nets.attention.params, grads, lr);
  }
  return loss_value;
}

}  // namespace

StepResult experience_blending_step(TrainerState& st, const TrainConfig& cfg) {
  StepResult res;
  if (st.replay.empty() || st.sbd.empty()) {
    st.warnings.push_back("step " + std::to_string(st.step) + ": skipped experience blending (empty " +
                          (st.replay.empty() ? "replay" : "SBD") + " memory)");
    res.skipped = true;
    return res;
  }
  const NetConfig& net = st.net;
  const float lr = static_cast<float>(cfg.lr);

  ModelState<float> m_re = st.nets.model;
  ModelState<float> m_e = st.nets.model;
  ExtractorParams<float> pe_re = st.nets.extractor;
  ExtractorParams<float> pe_e = st.nets.extractor;

  std::vector<std::size_t> r_first, e_first;
  std::vector<double> r_before, e_before;

  for (std::size_t s = 0; s < cfg.inner_steps; ++s) {
    const auto r_idx = draw_indices(st.sample_rng, st.replay.size(), std::min(cfg.batch_size, st.replay.size()));
    const auto e_idx = draw_indices(st.sample_rng, st.sbd.size(), std::min(cfg.batch_size, st.sbd.size()));
    const Tensor<float> r_images = st.replay.gather_images(r_idx);
    const std::vector<Label> r_labels = st.replay.gather_labels(r_idx);
    const Tensor<float> e_features = st.sbd.gather_features(e_idx);
    const std::vector<Label> e_labels = st.sbd.gather_labels(e_idx);

    // M_RE: L = CE(r-path(r)) + CE(e-path(e))
    Gradients<float> grads;
    {
      Tape<float> tape;
      auto p_r = bind(tape, st.nets.encoder.params, st.encoder_trainable);
      auto sa = bind(tape, st.nets.attention.params, st.encoder_trainable);
      auto m = bind(tape, m_re.params, true);
      auto pe = bind(tape, pe_re.params, true);
      Var<float> r_logits =
          classify_r_path(net, m, self_attention(net, sa, encode(net, p_r, tape.constant(r_images))));
      Var<float> e_logits = classify_e_path(net, m, pe, tape.constant(e_features));
      Var<float> loss = add(cross_entropy(r_logits, r_labels), cross_entropy(e_logits, e_labels));
      if (s == 0) {
        r_first = r_idx;
        r_before = to_double(cross_entropy_per_sample(r_logits.value(), r_labels));
        e_first = e_idx;
        e_before = to_double(cross_entropy_per_sample(e_logits.value(), e_labels));
        res.loss = loss.value()[0];
      }
      grads = tape.backward(loss);
    }
    sgd_step(m_re.params, grads, lr);
    if (!pe_re.params.empty()) sgd_step(pe_re.params, grads, lr);
    if (st.encoder_trainable) {
      sgd_step(st.nets.encoder.params, grads, lr);
      sgd_step(st.nets.attention.params, grads, lr);
    }

    // M_E: L_E = CE(e-path(e')) on a fresh E batch
    const auto e2_idx = draw_indices(st.sample_rng, st.sbd.size(), std::min(cfg.batch_size, st.sbd.size()));
    const Tensor<float> e2_features = st.sbd.gather_features(e2_idx);
    const std::vector<Label> e2_labels = st.sbd.gather_labels(e2_idx);
    {
      Tape<float> tape;
      auto m = bind(tape, m_e.params, true);
      auto pe = bind(tape, pe_e.params, true);
      Var<float> loss = cross_entropy(classify_e_path(net, m, pe, tape.constant(e2_features)), e2_labels);
      if (s == 0) res.loss_e = loss.value()[0];
      grads = tape.backward(loss);
    }
    sgd_step(m_e.params, grads, lr);
    if (!pe_e.params.empty()) sgd_step(pe_e.params, grads, lr);
  }

  const float alpha = static_cast<float>(cfg.alpha);
  st.nets.model = blend(m_re, m_e, alpha);
  if (!st.nets.extractor.params.empty()) st.nets.extractor.params = blend(pe_re.params, pe_e.params, alpha);

  update_replay_importance(st, cfg, std::move(r_first), std::move(r_before));
  if (st.sbd.budget()) {
    dedupe(e_first, e_before);
    const Tensor<float> logits = e_path_logits(net, st.nets, st.sbd.gather_features(e_first));
    const auto after = to_double(cross_entropy_per_sample(logits, st.sbd.gather_labels(e_first)));
    st.sbd.update_importance(e_first, e_before, after, cfg.beta);
  }
  ++st.step;
  return res;
}

StepResult replay_step(TrainerState& st, const TrainConfig& cfg) {
  StepResult res;
  if (st.replay.empty()) {
    st.warnings.push_back("step " + std::to_string(st.step) + ": skipped replay step (empty replay memory)");
    res.skipped = true;
    return res;
  }
  auto idx = draw_indices(st.sample_rng, st.replay.size(), std::min(cfg.batch_size, st.replay.size()));
  std::vector<double> before;
  res.loss = r_path_sgd(st, cfg, st.replay.gather_images(idx), st.replay.gather_labels(idx), &before);
  update_replay_importance(st, cfg, std::move(idx), std::move(before));
  ++st.step;
  return res;
}

StepResult direct_step(TrainerState& st, const TrainConfig& cfg, const Batch& batch) {
  StepResult res;
  res.loss = r_path_sgd(st, cfg, batch.images, batch.labels, nullptr);
  ++st.step;
  return res;
}

std::vector<SBDBatch> generate_task_sbd(TrainerState& st, const std::vector<Batch>& batches, const TrainConfig& cfg,
                                        std::uint32_t task_id, std::uint32_t epoch_tag) {
  std::vector<SBDBatch> out;
  out.reserve(batches.size());
  for (const auto& b : batches) {
    NoiseConfig noise{cfg.lambda, st.noise_rng(), cfg.per_channel_noise};
    out.push_back(generate_sbd(st.net, st.nets.encoder, st.nets.attention, b.images, b.labels, noise, task_id, epoch_tag));
  }
  return out;
}

void train_task(TrainerState& st, const Task& task, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  const bool first = st.task_index == 0;
  const bool blending = cfg.pipeline == Pipeline::kExperienceBlending;
  const auto task_id = static_cast<std::uint32_t>(st.task_index);
  st.encoder_trainable = first;

  if (blending) {
    if (first) st.first_task_raw_cache = task.batches;
    for (const auto& b : generate_task_sbd(st, task.batches, cfg, task_id, 0)) st.sbd.append(b);
  }

  for (std::size_t epoch = 0; epoch < cfg.epochs_per_task; ++epoch) {
    double total = 0.0;
    std::size_t steps = 0;
    for (const auto& batch : task.batches) {
      StepResult r;
      switch (cfg.pipeline) {
        case Pipeline::kFtfOnly:
          r = direct_step(st, cfg, batch);
          break;
        case Pipeline::kReplayOnly:
          offer_to_replay(st.replay, batch);
          r = replay_step(st, cfg);
          break;
        case Pipeline::kExperienceBlending:
          offer_to_replay(st.replay, batch);
          r = experience_blending_step(st, cfg);
          break;
      }
      if (!r.skipped) {
        total += r.loss;
        ++steps;
      }
    }
    if (first && blending) {
      st.sbd.replace_task_entries(0, generate_task_sbd(st, st.first_task_raw_cache, cfg, 0,
                                                       static_cast<std::uint32_t>(epoch + 1)));
    }
    if (on_epoch) on_epoch(st, epoch, steps ? total / static_cast<double>(steps) : 0.0);
  }

  if (first) {
    st.encoder_trainable = false;
    st.first_task_raw_cache.clear();
    st.first_task_raw_cache.shrink_to_fit();
  }
  ++st.task_index;
}

}  // namespace sbx
