#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "sbx/sbd.hpp"
#include "sbx/stream.hpp"

namespace sbx {

struct ReplaySample {
  Tensor<float> image;  // [1, H, W, C]
  Label label = 0;
  /// Smoothed observed loss decrease after a model update.
  double importance = 0.0;
  std::uint64_t inserted_at = 0;
  /// Row of the sample in its source dataset, when known.
  std::optional<std::uint64_t> source;
};

/// Capacity-bounded replay memory R. Samples are kept in insertion order.
/// R is a set over source rows: offering a sample whose source row is already
/// stored changes nothing.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const std::vector<ReplaySample>& samples() const { return samples_; }
  const std::map<Label, std::size_t>& class_counts() const { return class_counts_; }

  /// Mean importance of the stored samples, 0 when empty.
  double mean_importance() const;

  /// Appends with importance = current mean, then evicts once if over capacity.
  /// Returns the evicted sample, if any (possibly the new one).
  std::optional<ReplaySample> insert(Tensor<float> image, Label label,
                                     std::optional<std::uint64_t> source = std::nullopt);
  std::optional<ReplaySample> insert_with_importance(Tensor<float> image, Label label, double importance,
                                                     std::optional<std::uint64_t> source = std::nullopt);
  bool contains_source(std::uint64_t source) const { return sources_.contains(source); }

  /// Index that evict_least_important would remove: minimum importance, then
  /// the class with the most samples, then the oldest.
  std::size_t least_important_index() const;
  ReplaySample evict_least_important();

  /// importance <- (1 - beta) importance + beta (before - after), per listed index.
  void update_importance(std::span<const std::size_t> indices, std::span<const double> loss_before,
                         std::span<const double> loss_after, double beta);

  /// Images of rows `indices` stacked as [k, H, W, C].
  Tensor<float> gather_images(std::span<const std::size_t> indices) const;
  std::vector<Label> gather_labels(std::span<const std::size_t> indices) const;

  /// Number of stored image elements.
  std::size_t element_count() const;

  /// Writes the images as an SBDS dataset plus a CSV table
  /// inserted_at,label,importance,source (source empty when unknown).
  void save(const std::filesystem::path& dataset_path, const std::filesystem::path& importance_csv,
            std::size_t num_classes) const;
  static ReplayMemory load(const std::filesystem::path& dataset_path, const std::filesystem::path& importance_csv,
                           std::size_t capacity);

 private:
  std::size_t capacity_;
  std::vector<ReplaySample> samples_;
  std::map<Label, std::size_t> class_counts_;
  std::set<std::uint64_t> sources_;
  std::uint64_t next_insert_ = 0;
};

struct SBDEntry {
  Tensor<float> feature;  // [1, w, h, d]
  Label label = 0;
  std::uint32_t task_id = 0;
  double importance = 0.0;
  std::uint64_t inserted_at = 0;
};

/// SBD memory E, one entry per sample. Unbounded unless a budget is given.
class SBDMemory {
 public:
  explicit SBDMemory(std::optional<std::size_t> budget = std::nullopt);

  std::optional<std::size_t> budget() const { return budget_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<SBDEntry>& entries() const { return entries_; }

  double mean_importance() const;

  /// Splits the batch into entries (importance = current mean) and, with a
  /// budget, evicts lowest-importance entries (oldest first on ties) until within it.
  void append(const SBDBatch& batch);
  /// Drops every entry of `task_id`, then appends `batches`.
  void replace_task_entries(std::uint32_t task_id, const std::vector<SBDBatch>& batches);

  void update_importance(std::span<const std::size_t> indices, std::span<const double> loss_before,
                         std::span<const double> loss_after, double beta);

  Tensor<float> gather_features(std::span<const std::size_t> indices) const;
  std::vector<Label> gather_labels(std::span<const std::size_t> indices) const;

  std::size_t count_task(std::uint32_t task_id) const;
  std::size_t element_count() const;

  // "SBXE" | version u32 | count u64 | per entry: task_id u32 | label u16 |
  // shape u16 x 4 | f32 data. Little-endian. Importance is not stored.
  std::vector<char> encode() const;
  static SBDMemory decode(std::vector<char> bytes, std::optional<std::size_t> budget = std::nullopt);
  void save(const std::filesystem::path& path) const;
  static SBDMemory load(const std::filesystem::path& path, std::optional<std::size_t> budget = std::nullopt);

 private:
  void enforce_budget();

  std::optional<std::size_t> budget_;
  std::vector<SBDEntry> entries_;
  std::uint64_t next_insert_ = 0;
};

inline constexpr std::uint32_t kSbdStoreVersion = 1;

}  // namespace sbx
