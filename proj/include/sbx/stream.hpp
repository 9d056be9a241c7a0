#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sbx/tensor.hpp"

namespace sbx {

using Label = std::uint16_t;

struct Dataset {
  Tensor<float> images;  // [N, H, W, C]
  std::vector<Label> labels;
  std::size_t num_classes = 0;
  std::string split = "train";

  std::size_t size() const { return labels.size(); }
  std::size_t height() const { return images.dim(1); }
  std::size_t width() const { return images.dim(2); }
  std::size_t channels() const { return images.dim(3); }
  std::size_t image_numel() const { return height() * width() * channels(); }

  /// Rows `indices` as a [k, H, W, C] tensor.
  Tensor<float> gather(const std::vector<std::size_t>& indices) const;
  std::vector<Label> gather_labels(const std::vector<std::size_t>& indices) const;

  /// Shape/label consistency. Throws std::invalid_argument.
  void validate() const;
};

struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t samples_per_class = 100;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;
  double noise_std = 0.1;
};

/// Class k is a Gaussian bump at grid cell k plus a grating at angle pi*k/K, then
/// i.i.d. N(0, noise_std) pixel noise. Train and test draw from disjoint seed streams.
Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed, const std::string& split = "train");

/// Center (row, col) of class k's bump, in pixels.
std::pair<double, double> synthetic_bump_center(const SyntheticSpec& spec, std::size_t k);

struct Batch {
  Tensor<float> images;
  std::vector<Label> labels;
  /// Row indices into the source dataset.
  std::vector<std::size_t> source;

  std::size_t size() const { return labels.size(); }
};

struct Task {
  std::vector<Batch> batches;

  std::size_t sample_count() const;
  std::map<Label, std::size_t> class_counts() const;
};

struct StreamMeta {
  std::size_t num_tasks = 0;
  int n = 0;
  int m = 0;
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  std::map<Label, std::size_t> disjoint_task;       // disjoint class -> its only task
  std::map<Label, std::size_t> blurry_major_task;   // blurry class -> major task
};

struct TaskStream {
  std::vector<Task> tasks;
  StreamMeta meta;
};

/// i-Blurry-n-m split. floor(n% of K) classes are disjoint, dealt round-robin to
/// the T tasks after a seeded shuffle. Each other class picks a seeded major task
/// that receives floor((100-m)% of its samples); the rest are dealt round-robin,
/// from a seeded offset, over the remaining T-1 tasks. Each task is shuffled
/// and cut into batches of `batch_size` (last batch may be short).
TaskStream iblurry_split(const Dataset& d, std::size_t num_tasks, int n, int m, std::size_t batch_size,
                         std::uint64_t seed);

/// Metadata plus per-task source indices, as JSON text.
std::string stream_metadata_json(const TaskStream& stream);

inline constexpr std::uint32_t kDatasetVersion = 1;

// "SBDS" | version u32 | N u64 | H u16 | W u16 | C u16 | num_classes u16 |
// N images of H*W*C f32 (row-major) | N labels u16. Little-endian.
std::vector<char> encode_dataset(const Dataset& d);
Dataset decode_dataset(std::vector<char> bytes);
void store_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace sbx
