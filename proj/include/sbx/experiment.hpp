#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbx/eval.hpp"
#include "sbx/stream.hpp"
#include "sbx/trainer.hpp"

namespace sbx {

/// Invalid experiment config. The message starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct DatasetSource {
  /// Used when train_path is empty.
  SyntheticSpec synthetic;
  std::uint64_t synthetic_seed = 0;
  std::filesystem::path train_path;
  std::filesystem::path test_path;
};

struct StreamParams {
  std::size_t tasks = 5;
  int n = 50;
  int m = 10;
  std::size_t batch_size = 128;
};

struct ExperimentConfig {
  DatasetSource dataset;
  StreamParams stream;
  TrainConfig train;
  NetConfig model;
  /// Evaluate the seen-class test set after every epoch, or only at task ends.
  bool test_every_epoch = true;
  /// Rows of the task-0 and current-task validation batches.
  std::size_t validation_size = 128;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::filesystem::path output_dir = "runs";

  /// Resolved run directory: (SBX_OUTPUT_ROOT or output_dir) / baseline.
  std::filesystem::path run_dir() const;
};

/// Parses JSON text. Unknown keys are rejected; missing keys keep defaults.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Every effective field, as pretty JSON.
std::string experiment_config_json(const ExperimentConfig& cfg);

SyntheticSpec parse_synthetic_spec(const std::string& json_text, std::uint64_t* seed, std::string* split);

struct SeedResult {
  std::uint64_t seed = 0;
  /// Seen-class test accuracy at the end of each task.
  std::vector<double> task_accuracies;
  /// Current-task validation accuracy at the end of each task.
  std::vector<double> task_end_validation;
  double a_avg = 0.0;
  double a_fin = 0.0;
  BudgetReport budget;
  std::vector<std::string> warnings;
};

struct RunResult {
  std::filesystem::path run_dir;
  std::vector<SeedResult> seeds;
};

/// Runs every seed of the config. Seeds whose directory holds a DONE marker are
/// read back instead of retrained. Writes per-seed CSVs and checkpoints,
/// results.csv, summary.csv, the config echo, and metadata.json.
RunResult run_experiment(const ExperimentConfig& cfg);

inline constexpr const char* kCsvHeader = "seed,task,epoch,step,split,metric,value";

}  // namespace sbx
