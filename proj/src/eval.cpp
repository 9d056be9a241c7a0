#include "sbx/eval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace sbx {

std::string to_string(Split s) {
  switch (s) {
    case Split::kValidationCurrent:
      return "validation-current";
    case Split::kValidationTask0:
      return "validation-task0";
    case Split::kTestSeen:
      return "test-seen";
  }
  return "?";
}

namespace {

constexpr std::size_t kEvalChunk = 256;

}  // namespace

double accuracy(const NetConfig& cfg, const Networks<float>& nets, const Tensor<float>& images,
                std::span<const Label> labels) {
  if (labels.empty()) throw std::invalid_argument("accuracy: no samples");
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw std::invalid_argument("accuracy: " + std::to_string(labels.size()) + " labels for images " +
                                shape_str(images.shape()));
  }
  const std::size_t n = labels.size();
  const std::size_t row = images.numel() / n;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, n - start);
    std::vector<float> chunk(images.data().begin() + static_cast<std::ptrdiff_t>(start * row),
                             images.data().begin() + static_cast<std::ptrdiff_t>((start + count) * row));
    Shape shape = images.shape();
    shape[0] = count;
    const Tensor<float> logits = r_path_logits(cfg, nets, Tensor<float>(shape, std::move(chunk)));
    const std::size_t k = logits.dim(1);
    auto v = logits.data();
    for (std::size_t i = 0; i < count; ++i) {
      const auto first = v.begin() + static_cast<std::ptrdiff_t>(i * k);
      const auto pred = static_cast<std::size_t>(std::max_element(first, first + static_cast<std::ptrdiff_t>(k)) - first);
      if (pred == labels[start + i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double evaluate(const NetConfig& cfg, const Networks<float>& nets, const Dataset& testset,
                const std::set<Label>& seen) {
  if (seen.empty()) throw std::invalid_argument("evaluate: seen class set is empty");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < testset.size(); ++i) {
    if (seen.contains(testset.labels[i])) rows.push_back(i);
  }
  if (rows.empty()) throw std::invalid_argument("evaluate: no test samples belong to the seen classes");
  const auto labels = testset.gather_labels(rows);
  return accuracy(cfg, nets, testset.gather(rows), labels);
}

double a_avg(std::span<const double> task_accuracies) {
  if (task_accuracies.empty()) throw std::invalid_argument("a_avg: no task accuracies");
  return std::accumulate(task_accuracies.begin(), task_accuracies.end(), 0.0) /
         static_cast<double>(task_accuracies.size());
}

BudgetReport budget_report(const ReplayMemory& r, const SBDMemory& e) {
  BudgetReport b;
  b.replay_bytes = static_cast<std::uint64_t>(r.element_count()) * 4;
  b.sbd_bytes = static_cast<std::uint64_t>(e.element_count()) * 4;
  b.total_bytes = b.replay_bytes + b.sbd_bytes;
  return b;
}

}  // namespace sbx
