#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sbx/memory.hpp"
#include "sbx/nets.hpp"
#include "sbx/stream.hpp"

namespace sbx {

enum class Split { kValidationCurrent, kValidationTask0, kTestSeen };

std::string to_string(Split s);

struct EvalRecord {
  std::size_t task_index = 0;
  std::uint64_t step = 0;
  Split split = Split::kTestSeen;
  double accuracy = 0.0;
  std::vector<Label> seen_classes;  // sorted
};

/// Fraction of rows whose r-path argmax equals the label. Logits are not masked.
double accuracy(const NetConfig& cfg, const Networks<float>& nets, const Tensor<float>& images,
                std::span<const Label> labels);

/// Accuracy over the test samples whose label is in `seen`. Rejects an empty
/// `seen` set and an empty filtered test set.
double evaluate(const NetConfig& cfg, const Networks<float>& nets, const Dataset& testset,
                const std::set<Label>& seen);

/// Arithmetic mean; rejects an empty list.
double a_avg(std::span<const double> task_accuracies);

struct BudgetReport {
  std::uint64_t replay_bytes = 0;
  std::uint64_t sbd_bytes = 0;
  std::uint64_t total_bytes = 0;
};

/// Stored elements x 4 bytes for each memory.
BudgetReport budget_report(const ReplayMemory& r, const SBDMemory& e);

}  // namespace sbx
