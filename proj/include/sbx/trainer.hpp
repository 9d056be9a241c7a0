#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sbx/memory.hpp"
#include "sbx/nets.hpp"
#include "sbx/sbd.hpp"
#include "sbx/stream.hpp"

namespace sbx {

enum class Pipeline {
  kExperienceBlending,  // FTF + R + E with dual-model blending
  kReplayOnly,          // FTF + R, r-path only
  kFtfOnly,             // FTF, trains on the stream batches directly
};

std::string to_string(Pipeline p);
Pipeline parse_pipeline(const std::string& s);

struct TrainConfig {
  double alpha = 0.5;
  double lr = 0.01;
  std::size_t epochs_per_task = 10;
  std::size_t batch_size = 128;
  std::size_t inner_steps = 1;
  double lambda = 0.005;
  bool per_channel_noise = false;
  /// Smoothing factor for importance updates.
  double beta = 0.1;
  std::size_t replay_capacity = 500;
  std::optional<std::size_t> sbd_budget;
  Pipeline pipeline = Pipeline::kExperienceBlending;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainerState {
  NetConfig net;
  Networks<float> nets;
  ReplayMemory replay;
  SBDMemory sbd;
  std::size_t task_index = 0;
  /// P_R and SA receive updates only while this is set (first task).
  bool encoder_trainable = true;
  /// Raw batches of the first task, kept only until it ends for SBD regeneration.
  std::vector<Batch> first_task_raw_cache;
  std::mt19937_64 sample_rng;
  std::mt19937_64 noise_rng;
  std::uint64_t step = 0;
  std::vector<std::string> warnings;
};

/// Fresh state: networks initialized from cfg.seed, empty memories.
TrainerState make_trainer_state(const NetConfig& net, const TrainConfig& cfg);

/// (1 - alpha) a + alpha b, tensor by tensor. Both sets must have identical names and shapes.
template <typename T>
ParamSet<T> blend(const ParamSet<T>& a, const ParamSet<T>& b, T alpha);

template <typename T>
ModelState<T> blend(const ModelState<T>& a, const ModelState<T>& b, T alpha) {
  return ModelState<T>{blend(a.params, b.params, alpha)};
}

/// `count` indices drawn uniformly with replacement from [0, n).
std::vector<std::size_t> draw_indices(std::mt19937_64& rng, std::size_t n, std::size_t count);

struct StepResult {
  bool skipped = false;
  /// L_{R u E} (or the r-path loss for the baselines) before the update.
  double loss = 0.0;
  /// L_E before the update (Experience Blending only).
  double loss_e = 0.0;
};

/// One Experience Blending call. Clones M into M_RE and M_E; each inner step draws
/// an R batch and an E batch (uniform, with replacement), takes an SGD step on
/// CE(r-path(r)) + CE(e-path(e)) for M_RE (and for P_R/SA while trainable), then
/// an SGD step on CE(e-path(e')) over a fresh E batch for M_E. Finally
/// M = blend(M_RE, M_E, alpha) and the first R batch's importances are updated
/// from their loss before and after the whole call.
StepResult experience_blending_step(TrainerState& state, const TrainConfig& cfg);

/// Replay-only baseline step: SGD on the r-path loss of one R batch.
StepResult replay_step(TrainerState& state, const TrainConfig& cfg);

/// Fine-tuning baseline step: SGD on the r-path loss of the stream batch itself.
StepResult direct_step(TrainerState& state, const TrainConfig& cfg, const Batch& batch);

/// Called after every epoch (after task-0 SBD regeneration) with the epoch's mean step loss.
using EpochCallback = std::function<void(const TrainerState&, std::size_t epoch, double mean_loss)>;

/// Trains one task of the stream with the configured pipeline and advances
/// task_index. After the first task the encoder and SA are frozen and the raw
/// cache is dropped.
void train_task(TrainerState& state, const Task& task, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// SBD for every batch of `batches`, each with a fresh noise seed from state.noise_rng.
std::vector<SBDBatch> generate_task_sbd(TrainerState& state, const std::vector<Batch>& batches, const TrainConfig& cfg,
                                        std::uint32_t task_id, std::uint32_t epoch_tag);

}  // namespace sbx
