#include "sbx/memory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "sbx/binary_io.hpp"

namespace sbx {

namespace {

constexpr const char* kReplayCsvHeader = "inserted_at,label,importance,source";

void check_update_args(std::size_t size, std::span<const std::size_t> indices, std::span<const double> before,
                       std::span<const double> after, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("importance_update: beta must be in (0, 1]");
  if (before.size() != indices.size() || after.size() != indices.size()) {
    throw std::invalid_argument("importance_update: loss arrays not aligned with indices");
  }
  for (std::size_t i : indices) {
    if (i >= size) {
      throw std::out_of_range("importance_update: index " + std::to_string(i) + " out of range for memory of " +
                              std::to_string(size));
    }
  }
}

template <typename Entry>
Tensor<float> stack(const std::vector<Entry>& items, std::span<const std::size_t> indices,
                    Tensor<float> Entry::*field) {
  if (indices.empty()) throw std::invalid_argument("gather: no indices");
  const Tensor<float>& first = items.at(indices[0]).*field;
  Shape shape = first.shape();
  const std::size_t row = first.numel();
  std::vector<float> data;
  data.reserve(row * indices.size());
  for (std::size_t i : indices) {
    const auto v = (items.at(i).*field).data();
    data.insert(data.end(), v.begin(), v.end());
  }
  shape[0] = indices.size();
  return Tensor<float>(std::move(shape), std::move(data));
}

}  // namespace

// ---- ReplayMemory ----------------------------------------------------------

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay memory: capacity must be positive");
}

double ReplayMemory::mean_importance() const {
  if (samples_.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples_) total += s.importance;
  return total / static_cast<double>(samples_.size());
}

std::optional<ReplaySample> ReplayMemory::insert(Tensor<float> image, Label label,
                                                 std::optional<std::uint64_t> source) {
  return insert_with_importance(std::move(image), label, mean_importance(), source);
}

std::optional<ReplaySample> ReplayMemory::insert_with_importance(Tensor<float> image, Label label, double importance,
                                                                 std::optional<std::uint64_t> source) {
  if (source && sources_.contains(*source)) return std::nullopt;
  if (!std::isfinite(importance)) throw std::invalid_argument("replay memory: non-finite importance");
  if (image.rank() == 3) image = image.reshaped(Shape{1, image.dim(0), image.dim(1), image.dim(2)});
  if (image.rank() != 4 || image.dim(0) != 1) {
    throw std::invalid_argument("replay memory: expected a single image, got " + shape_str(image.shape()));
  }
  samples_.push_back(ReplaySample{std::move(image), label, importance, next_insert_++, source});
  ++class_counts_[label];
  if (source) sources_.insert(*source);
  if (samples_.size() > capacity_) return evict_least_important();
  return std::nullopt;
}

std::size_t ReplayMemory::least_important_index() const {
  if (samples_.empty()) throw std::logic_error("replay memory: evict from empty memory");
  double lowest = samples_[0].importance;
  for (const auto& s : samples_) lowest = std::min(lowest, s.importance);
  std::size_t largest_class_count = 0;
  for (const auto& s : samples_) {
    if (s.importance == lowest) largest_class_count = std::max(largest_class_count, class_counts_.at(s.label));
  }
  // Samples are stored oldest first, so the first match is the oldest.
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (s.importance == lowest && class_counts_.at(s.label) == largest_class_count) return i;
  }
  throw std::logic_error("replay memory: no eviction candidate");
}

ReplaySample ReplayMemory::evict_least_important() {
  const std::size_t i = least_important_index();
  ReplaySample out = std::move(samples_[i]);
  samples_.erase(samples_.begin() + static_cast<std::ptrdiff_t>(i));
  if (--class_counts_[out.label] == 0) class_counts_.erase(out.label);
  if (out.source) sources_.erase(*out.source);
  return out;
}

void ReplayMemory::update_importance(std::span<const std::size_t> indices, std::span<const double> loss_before,
                                     std::span<const double> loss_after, double beta) {
  check_update_args(samples_.size(), indices, loss_before, loss_after, beta);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    auto& imp = samples_[indices[k]].importance;
    imp = (1.0 - beta) * imp + beta * (loss_before[k] - loss_after[k]);
  }
}

Tensor<float> ReplayMemory::gather_images(std::span<const std::size_t> indices) const {
  return stack(samples_, indices, &ReplaySample::image);
}

std::vector<Label> ReplayMemory::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<Label> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(samples_.at(i).label);
  return out;
}

std::size_t ReplayMemory::element_count() const {
  std::size_t n = 0;
  for (const auto& s : samples_) n += s.image.numel();
  return n;
}

void ReplayMemory::save(const std::filesystem::path& dataset_path, const std::filesystem::path& importance_csv,
                        std::size_t num_classes) const {
  if (samples_.empty()) throw std::invalid_argument("replay memory: nothing to save");
  std::vector<std::size_t> all(samples_.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  Dataset d;
  d.images = gather_images(all);
  d.labels = gather_labels(all);
  d.num_classes = num_classes;
  store_dataset(d, dataset_path);

  std::ofstream csv(importance_csv, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot open " + importance_csv.string());
  csv << kReplayCsvHeader << '\n';
  char buf[64];
  for (const auto& s : samples_) {
    std::snprintf(buf, sizeof buf, "%.17g", s.importance);
    csv << s.inserted_at << ',' << s.label << ',' << buf << ',';
    if (s.source) csv << *s.source;
    csv << '\n';
  }
}

ReplayMemory ReplayMemory::load(const std::filesystem::path& dataset_path, const std::filesystem::path& importance_csv,
                                std::size_t capacity) {
  const Dataset d = load_dataset(dataset_path);
  std::ifstream csv(importance_csv);
  if (!csv) throw std::runtime_error("cannot open " + importance_csv.string());
  std::string line;
  if (!std::getline(csv, line) || line != kReplayCsvHeader) {
    throw std::runtime_error(importance_csv.string() + ":1: expected header " + kReplayCsvHeader);
  }
  if (d.size() > capacity) throw std::invalid_argument("replay memory: stored samples exceed capacity");
  ReplayMemory r(capacity);
  std::size_t row = 0;
  for (std::size_t line_no = 2; std::getline(csv, line); ++line_no) {
    std::vector<std::string> fields(1);
    for (char ch : line) {
      if (ch == ',') {
        fields.emplace_back();
      } else {
        fields.back() += ch;
      }
    }
    if (fields.size() != 4) {
      throw std::runtime_error(importance_csv.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
    }
    const std::string& a = fields[0];
    const std::string& b = fields[1];
    const std::string& c = fields[2];
    const std::string& src = fields[3];
    if (row >= d.size()) throw std::runtime_error(importance_csv.string() + ": more rows than stored images");
    ReplaySample s;
    s.image = d.gather({row});
    s.label = d.labels[row];
    s.inserted_at = std::stoull(a);
    s.importance = std::stod(c);
    if (!src.empty()) {
      s.source = std::stoull(src);
      if (!r.sources_.insert(*s.source).second) {
        throw std::runtime_error(importance_csv.string() + ":" + std::to_string(line_no) + ": duplicate source row");
      }
    }
    if (static_cast<std::size_t>(std::stoul(b)) != s.label) {
      throw std::runtime_error(importance_csv.string() + ":" + std::to_string(line_no) + ": label disagrees with dataset");
    }
    r.next_insert_ = std::max(r.next_insert_, s.inserted_at + 1);
    ++r.class_counts_[s.label];
    r.samples_.push_back(std::move(s));
    ++row;
  }
  if (row != d.size()) throw std::runtime_error(importance_csv.string() + ": fewer rows than stored images");
  return r;
}

// ---- SBDMemory -------------------------------------------------------------

SBDMemory::SBDMemory(std::optional<std::size_t> budget) : budget_(budget) {
  if (budget_ && *budget_ == 0) throw std::invalid_argument("sbd memory: budget must be positive");
}

double SBDMemory::mean_importance() const {
  if (entries_.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : entries_) total += e.importance;
  return total / static_cast<double>(entries_.size());
}

void SBDMemory::append(const SBDBatch& batch) {
  const auto& s = batch.features.shape();
  if (s.size() != 4 || s[0] != batch.labels.size()) {
    throw std::invalid_argument("sbd memory: features " + shape_str(s) + " do not match " +
                                std::to_string(batch.labels.size()) + " labels");
  }
  const double init = mean_importance();
  const std::size_t row = s[1] * s[2] * s[3];
  auto v = batch.features.data();
  for (std::size_t i = 0; i < batch.labels.size(); ++i) {
    std::vector<float> data(v.begin() + static_cast<std::ptrdiff_t>(i * row),
                            v.begin() + static_cast<std::ptrdiff_t>((i + 1) * row));
    entries_.push_back(SBDEntry{Tensor<float>(Shape{1, s[1], s[2], s[3]}, std::move(data)), batch.labels[i],
                                batch.task_id, init, next_insert_++});
  }
  enforce_budget();
}

void SBDMemory::enforce_budget() {
  if (!budget_ || entries_.size() <= *budget_) return;
  const std::size_t excess = entries_.size() - *budget_;
  std::vector<std::size_t> order(entries_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (entries_[a].importance != entries_[b].importance) return entries_[a].importance < entries_[b].importance;
    return entries_[a].inserted_at < entries_[b].inserted_at;
  });
  std::vector<bool> drop(entries_.size(), false);
  for (std::size_t k = 0; k < excess; ++k) drop[order[k]] = true;
  std::vector<SBDEntry> kept;
  kept.reserve(*budget_);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!drop[i]) kept.push_back(std::move(entries_[i]));
  }
  entries_ = std::move(kept);
}

void SBDMemory::replace_task_entries(std::uint32_t task_id, const std::vector<SBDBatch>& batches) {
  for (const auto& b : batches) {
    if (b.task_id != task_id) throw std::invalid_argument("sbd memory: replacement batch has a different task id");
  }
  std::erase_if(entries_, [task_id](const SBDEntry& e) { return e.task_id == task_id; });
  for (const auto& b : batches) append(b);
}

void SBDMemory::update_importance(std::span<const std::size_t> indices, std::span<const double> loss_before,
                                  std::span<const double> loss_after, double beta) {
  check_update_args(entries_.size(), indices, loss_before, loss_after, beta);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    auto& imp = entries_[indices[k]].importance;
    imp = (1.0 - beta) * imp + beta * (loss_before[k] - loss_after[k]);
  }
}

Tensor<float> SBDMemory::gather_features(std::span<const std::size_t> indices) const {
  return stack(entries_, indices, &SBDEntry::feature);
}

std::vector<Label> SBDMemory::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<Label> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(entries_.at(i).label);
  return out;
}

std::size_t SBDMemory::count_task(std::uint32_t task_id) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [task_id](const SBDEntry& e) { return e.task_id == task_id; }));
}

std::size_t SBDMemory::element_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.feature.numel();
  return n;
}

std::vector<char> SBDMemory::encode() const {
  ByteWriter w;
  w.bytes("SBXE");
  w.u32(kSbdStoreVersion);
  w.u64(entries_.size());
  for (const auto& e : entries_) {
    w.u32(e.task_id);
    w.u16(e.label);
    for (std::size_t d : e.feature.shape()) {
      if (d > 65535) throw std::invalid_argument("sbd store: dimension does not fit in u16");
      w.u16(static_cast<std::uint16_t>(d));
    }
    w.f32s(e.feature.data());
  }
  return w.buffer();
}

SBDMemory SBDMemory::decode(std::vector<char> bytes, std::optional<std::size_t> budget) {
  ByteReader r(std::move(bytes));
  r.expect_magic("SBXE", "SBD store");
  const std::uint64_t version_at = r.offset();
  if (const std::uint32_t v = r.u32(); v != kSbdStoreVersion) {
    throw ParseError("unsupported SBD store version " + std::to_string(v), version_at);
  }
  const std::uint64_t count = r.u64();
  SBDMemory out(std::nullopt);
  for (std::uint64_t i = 0; i < count; ++i) {
    SBDEntry e;
    e.task_id = r.u32();
    e.label = r.u16();
    const std::uint64_t shape_at = r.offset();
    Shape shape(4);
    for (auto& d : shape) d = r.u16();
    if (std::find(shape.begin(), shape.end(), std::size_t{0}) != shape.end()) {
      throw ParseError("zero dimension in SBD entry " + std::to_string(i), shape_at);
    }
    e.feature = Tensor<float>(shape);
    r.f32s(e.feature.data());
    e.inserted_at = out.next_insert_++;
    out.entries_.push_back(std::move(e));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after SBD entries", r.offset());
  out.budget_ = budget;
  if (budget && *budget == 0) throw std::invalid_argument("sbd memory: budget must be positive");
  out.enforce_budget();
  return out;
}

void SBDMemory::save(const std::filesystem::path& path) const { write_file(path, encode()); }

SBDMemory SBDMemory::load(const std::filesystem::path& path, std::optional<std::size_t> budget) {
  return decode(read_file(path), budget);
}

}  // namespace sbx
