#include "sbx/stream.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "sbx/binary_io.hpp"

namespace sbx {

Tensor<float> Dataset::gather(const std::vector<std::size_t>& indices) const {
  const std::size_t row = image_numel();
  std::vector<float> out;
  out.reserve(indices.size() * row);
  auto src = images.data();
  for (std::size_t i : indices) {
    if (i >= size()) throw std::out_of_range("dataset: row " + std::to_string(i) + " out of range");
    out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(i * row),
               src.begin() + static_cast<std::ptrdiff_t>((i + 1) * row));
  }
  return Tensor<float>(Shape{indices.size(), height(), width(), channels()}, std::move(out));
}

std::vector<Label> Dataset::gather_labels(const std::vector<std::size_t>& indices) const {
  std::vector<Label> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

void Dataset::validate() const {
  if (images.rank() != 4) throw std::invalid_argument("dataset: images must be [N,H,W,C]");
  if (images.dim(0) != labels.size()) {
    throw std::invalid_argument("dataset: " + std::to_string(images.dim(0)) + " images but " +
                                std::to_string(labels.size()) + " labels");
  }
  if (num_classes == 0) throw std::invalid_argument("dataset: num_classes must be positive");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw std::invalid_argument("dataset: label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                                  " is not below num_classes " + std::to_string(num_classes));
    }
  }
}

// ---- synthetic data --------------------------------------------------------

namespace {

std::size_t grid_side(std::size_t k) {
  std::size_t g = 1;
  while (g * g < k) ++g;
  return g;
}

}  // namespace

std::pair<double, double> synthetic_bump_center(const SyntheticSpec& spec, std::size_t k) {
  const std::size_t g = grid_side(spec.num_classes);
  const double row = (static_cast<double>(k / g) + 0.5) * static_cast<double>(spec.height) / static_cast<double>(g);
  const double col = (static_cast<double>(k % g) + 0.5) * static_cast<double>(spec.width) / static_cast<double>(g);
  return {row, col};
}

Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed, const std::string& split) {
  if (spec.num_classes == 0 || spec.samples_per_class == 0 || spec.height == 0 || spec.width == 0 ||
      spec.channels == 0 || spec.noise_std < 0.0) {
    throw std::invalid_argument("gen_synthetic: sizes must be positive and noise_std non-negative");
  }
  if (spec.num_classes > 65535) throw std::invalid_argument("gen_synthetic: too many classes for u16 labels");
  if (split != "train" && split != "test") throw std::invalid_argument("gen_synthetic: split must be train or test");

  const std::size_t h = spec.height, w = spec.width, c = spec.channels;
  const std::size_t g = grid_side(spec.num_classes);
  const double sigma = static_cast<double>(std::min(h, w)) / (2.0 * static_cast<double>(g));
  const double cycles = 2.0;

  // Noise-free prototype per class.
  std::vector<std::vector<double>> proto(spec.num_classes, std::vector<double>(h * w * c));
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    const auto [cy, cx] = synthetic_bump_center(spec, k);
    const double theta = std::numbers::pi * static_cast<double>(k) / static_cast<double>(spec.num_classes);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
        const double bump = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        const double u = (static_cast<double>(x) * std::cos(theta) + static_cast<double>(y) * std::sin(theta)) /
                         static_cast<double>(std::max(h, w));
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double phase = static_cast<double>(ch) * std::numbers::pi / 3.0;
          const double grating = 0.5 * std::cos(2.0 * std::numbers::pi * cycles * u + phase);
          proto[k][(y * w + x) * c + ch] = bump + grating;
        }
      }
  }

  const std::uint64_t stream_seed = split == "train" ? seed : seed ^ 0x9E3779B97F4A7C15ull;
  std::mt19937_64 rng(stream_seed);
  std::normal_distribution<double> noise(0.0, spec.noise_std > 0.0 ? spec.noise_std : 1.0);

  const std::size_t n = spec.num_classes * spec.samples_per_class;
  Dataset d;
  d.num_classes = spec.num_classes;
  d.split = split;
  d.images = Tensor<float>(Shape{n, h, w, c});
  d.labels.reserve(n);
  auto out = d.images.data();
  std::size_t row = 0;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++row) {
      for (std::size_t i = 0; i < h * w * c; ++i) {
        const double jitter = spec.noise_std > 0.0 ? noise(rng) : 0.0;
        out[row * h * w * c + i] = static_cast<float>(proto[k][i] + jitter);
      }
      d.labels.push_back(static_cast<Label>(k));
    }
  }
  return d;
}

// ---- i-Blurry split --------------------------------------------------------

std::size_t Task::sample_count() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.size();
  return n;
}

std::map<Label, std::size_t> Task::class_counts() const {
  std::map<Label, std::size_t> counts;
  for (const auto& b : batches)
    for (Label l : b.labels) ++counts[l];
  return counts;
}

TaskStream iblurry_split(const Dataset& d, std::size_t num_tasks, int n, int m, std::size_t batch_size,
                         std::uint64_t seed) {
  d.validate();
  if (num_tasks == 0) throw std::invalid_argument("iblurry_split: need at least one task");
  if (n < 0 || n > 100 || m < 0 || m > 100) throw std::invalid_argument("iblurry_split: n and m are percentages in [0,100]");
  if (batch_size == 0) throw std::invalid_argument("iblurry_split: batch_size must be positive");
  if (d.size() < d.num_classes) {
    throw std::invalid_argument("iblurry_split: dataset has fewer samples than classes");
  }
  const std::size_t classes = d.num_classes;
  const std::size_t num_disjoint = static_cast<std::size_t>(n) * classes / 100;
  if (n > 0 && num_tasks > num_disjoint) {
    throw std::invalid_argument("iblurry_split: " + std::to_string(num_tasks) + " tasks but only " +
                                std::to_string(num_disjoint) + " disjoint classes");
  }

  std::mt19937_64 rng(seed);
  TaskStream stream;
  stream.meta = StreamMeta{num_tasks, n, m, batch_size, seed, {}, {}};

  std::vector<Label> order(classes);
  for (std::size_t k = 0; k < classes; ++k) order[k] = static_cast<Label>(k);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < num_disjoint; ++i) stream.meta.disjoint_task[order[i]] = i % num_tasks;

  std::vector<Label> blurry(order.begin() + static_cast<std::ptrdiff_t>(num_disjoint), order.end());
  std::sort(blurry.begin(), blurry.end());
  std::uniform_int_distribution<std::size_t> pick_task(0, num_tasks - 1);
  for (Label k : blurry) stream.meta.blurry_major_task[k] = pick_task(rng);

  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < d.size(); ++i) by_class[d.labels[i]].push_back(i);

  std::vector<std::vector<std::size_t>> task_rows(num_tasks);
  for (std::size_t k = 0; k < classes; ++k) {
    auto& rows = by_class[k];
    std::shuffle(rows.begin(), rows.end(), rng);
    const Label label = static_cast<Label>(k);
    if (auto it = stream.meta.disjoint_task.find(label); it != stream.meta.disjoint_task.end()) {
      auto& dst = task_rows[it->second];
      dst.insert(dst.end(), rows.begin(), rows.end());
      continue;
    }
    const std::size_t major = stream.meta.blurry_major_task.at(label);
    const std::size_t major_count = num_tasks == 1 ? rows.size() : static_cast<std::size_t>(100 - m) * rows.size() / 100;
    task_rows[major].insert(task_rows[major].end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(major_count));
    if (major_count == rows.size()) continue;

    std::vector<std::size_t> others;
    for (std::size_t t = 0; t < num_tasks; ++t) {
      if (t != major) others.push_back(t);
    }
    std::uniform_int_distribution<std::size_t> pick_offset(0, others.size() - 1);
    const std::size_t offset = pick_offset(rng);
    for (std::size_t r = major_count; r < rows.size(); ++r) {
      task_rows[others[(offset + r - major_count) % others.size()]].push_back(rows[r]);
    }
  }

  stream.tasks.resize(num_tasks);
  for (std::size_t t = 0; t < num_tasks; ++t) {
    auto& rows = task_rows[t];
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t start = 0; start < rows.size(); start += batch_size) {
      const std::size_t end = std::min(rows.size(), start + batch_size);
      Batch b;
      b.source.assign(rows.begin() + static_cast<std::ptrdiff_t>(start), rows.begin() + static_cast<std::ptrdiff_t>(end));
      b.images = d.gather(b.source);
      b.labels = d.gather_labels(b.source);
      stream.tasks[t].batches.push_back(std::move(b));
    }
  }
  return stream;
}

std::string stream_metadata_json(const TaskStream& stream) {
  nlohmann::ordered_json j;
  j["num_tasks"] = stream.meta.num_tasks;
  j["n"] = stream.meta.n;
  j["m"] = stream.meta.m;
  j["batch_size"] = stream.meta.batch_size;
  j["seed"] = stream.meta.seed;
  auto& disjoint = j["disjoint_task"] = nlohmann::ordered_json::object();
  for (const auto& [k, t] : stream.meta.disjoint_task) disjoint[std::to_string(k)] = t;
  auto& blurry = j["blurry_major_task"] = nlohmann::ordered_json::object();
  for (const auto& [k, t] : stream.meta.blurry_major_task) blurry[std::to_string(k)] = t;
  auto& tasks = j["tasks"] = nlohmann::ordered_json::array();
  for (const auto& task : stream.tasks) {
    nlohmann::ordered_json tj;
    tj["samples"] = task.sample_count();
    auto& counts = tj["class_counts"] = nlohmann::ordered_json::object();
    for (const auto& [k, c] : task.class_counts()) counts[std::to_string(k)] = c;
    auto& batches = tj["batches"] = nlohmann::ordered_json::array();
    for (const auto& b : task.batches) batches.push_back(b.source);
    tasks.push_back(std::move(tj));
  }
  return j.dump(2) + "\n";
}

// ---- SBDS format -----------------------------------------------------------

std::vector<char> encode_dataset(const Dataset& d) {
  d.validate();
  if (d.height() > 65535 || d.width() > 65535 || d.channels() > 65535 || d.num_classes > 65535) {
    throw std::invalid_argument("store_dataset: dimension does not fit in u16");
  }
  ByteWriter w;
  w.bytes("SBDS");
  w.u32(kDatasetVersion);
  w.u64(d.size());
  w.u16(static_cast<std::uint16_t>(d.height()));
  w.u16(static_cast<std::uint16_t>(d.width()));
  w.u16(static_cast<std::uint16_t>(d.channels()));
  w.u16(static_cast<std::uint16_t>(d.num_classes));
  w.f32s(d.images.data());
  for (Label l : d.labels) w.u16(l);
  return w.buffer();
}

Dataset decode_dataset(std::vector<char> bytes) {
  ByteReader r(std::move(bytes));
  r.expect_magic("SBDS", "dataset");
  const std::uint64_t version_at = r.offset();
  if (const std::uint32_t v = r.u32(); v != kDatasetVersion) {
    throw ParseError("unsupported dataset version " + std::to_string(v), version_at);
  }
  const std::uint64_t n = r.u64();
  const std::uint64_t dims_at = r.offset();
  const std::size_t h = r.u16(), w = r.u16(), c = r.u16(), classes = r.u16();
  if (n == 0 || h == 0 || w == 0 || c == 0 || classes == 0) {
    throw ParseError("dataset header has a zero count or dimension", dims_at);
  }
  const std::uint64_t payload = n * (h * w * c * 4 + 2);
  if (r.remaining() < payload) {
    throw ParseError("truncated dataset: header promises " + std::to_string(payload) + " payload bytes, " +
                         std::to_string(r.remaining()) + " present",
                     r.offset());
  }
  Dataset d;
  d.num_classes = classes;
  d.images = Tensor<float>(Shape{static_cast<std::size_t>(n), h, w, c});
  r.f32s(d.images.data());
  d.labels.resize(static_cast<std::size_t>(n));
  for (auto& l : d.labels) {
    const std::uint64_t at = r.offset();
    l = r.u16();
    if (l >= classes) {
      throw ParseError("label " + std::to_string(l) + " is not below num_classes " + std::to_string(classes), at);
    }
  }
  if (!r.at_end()) throw ParseError("trailing bytes after dataset payload", r.offset());
  return d;
}

void store_dataset(const Dataset& d, const std::filesystem::path& path) { write_file(path, encode_dataset(d)); }

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

}  // namespace sbx
