#include "sbx/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sbx/binary_io.hpp"
#include "sbx/checkpoint.hpp"
#include "sbx/results.hpp"

namespace sbx {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

// Reads the keys of one JSON object, remembering which ones were consumed so
// that typos surface as errors instead of silently keeping defaults.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  void get(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || v->get<std::int64_t>() < 0) {
        throw ConfigError(path(key), "expected a non-negative integer");
      }
      out = v->get<std::size_t>();
    }
  }
  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(path(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(path(key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(path(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(path(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::optional<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      std::size_t n = 0;
      get(key, n);
      out = n;
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.contains(it.key())) throw ConfigError(path(it.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what, std::string("invalid JSON: ") + e.what());
  }
}

void read_synthetic(Fields& f, SyntheticSpec& spec) {
  f.get("num_classes", spec.num_classes);
  f.get("samples_per_class", spec.samples_per_class);
  f.get("height", spec.height);
  f.get("width", spec.width);
  f.get("channels", spec.channels);
  f.get("noise_std", spec.noise_std);
}

void check_synthetic(const SyntheticSpec& s, const std::string& path) {
  if (s.num_classes < 2) throw ConfigError(path + ".num_classes", "need at least 2 classes");
  if (s.samples_per_class == 0) throw ConfigError(path + ".samples_per_class", "must be positive");
  if (s.height == 0 || s.width == 0 || s.channels == 0) throw ConfigError(path, "image dimensions must be positive");
  if (!(s.noise_std >= 0.0)) throw ConfigError(path + ".noise_std", "must be non-negative");
}

std::string read_text(const fs::path& p) {
  const auto bytes = read_file(p);
  return std::string(bytes.begin(), bytes.end());
}

void write_text(const fs::path& p, const std::string& text) { write_file(p, std::vector<char>(text.begin(), text.end())); }

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace

fs::path ExperimentConfig::run_dir() const {
  fs::path root = output_dir;
  if (const char* env = std::getenv("SBX_OUTPUT_ROOT"); env && *env) root = env;
  return root / to_string(train.pipeline);
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  const json root = parse_json(json_text, "config");
  ExperimentConfig cfg;
  Fields top(root, "");

  if (const json* d = top.find("dataset")) {
    Fields f(*d, "dataset");
    const json* syn = f.find("synthetic");
    const json* train = f.find("train");
    const json* test = f.find("test");
    if (syn && (train || test)) throw ConfigError("dataset", "give either synthetic or train/test paths, not both");
    if (syn) {
      Fields s(*syn, "dataset.synthetic");
      read_synthetic(s, cfg.dataset.synthetic);
      s.get("seed", cfg.dataset.synthetic_seed);
      s.finish();
    }
    if (train || test) {
      if (!train || !test) throw ConfigError("dataset", "train and test paths go together");
      std::string tr, te;
      f.get("train", tr);
      f.get("test", te);
      cfg.dataset.train_path = tr;
      cfg.dataset.test_path = te;
      if (!fs::exists(cfg.dataset.train_path)) throw ConfigError("dataset.train", "no such file: " + tr);
      if (!fs::exists(cfg.dataset.test_path)) throw ConfigError("dataset.test", "no such file: " + te);
    }
    f.finish();
  }
  check_synthetic(cfg.dataset.synthetic, "dataset.synthetic");

  if (const json* s = top.find("stream")) {
    Fields f(*s, "stream");
    f.get("tasks", cfg.stream.tasks);
    f.get("n", cfg.stream.n);
    f.get("m", cfg.stream.m);
    f.get("batch_size", cfg.stream.batch_size);
    f.finish();
  }
  if (cfg.stream.tasks == 0) throw ConfigError("stream.tasks", "must be positive");
  if (cfg.stream.n < 0 || cfg.stream.n > 100) throw ConfigError("stream.n", "must be in [0, 100]");
  if (cfg.stream.m < 0 || cfg.stream.m > 100) throw ConfigError("stream.m", "must be in [0, 100]");
  if (cfg.stream.batch_size == 0) throw ConfigError("stream.batch_size", "must be positive");

  cfg.train.batch_size = cfg.stream.batch_size;
  std::string baseline = to_string(cfg.train.pipeline);
  if (const json* t = top.find("train")) {
    Fields f(*t, "train");
    f.get("alpha", cfg.train.alpha);
    f.get("lr", cfg.train.lr);
    f.get("epochs_per_task", cfg.train.epochs_per_task);
    f.get("batch_size", cfg.train.batch_size);
    f.get("inner_steps", cfg.train.inner_steps);
    f.get("lambda", cfg.train.lambda);
    f.get("per_channel_noise", cfg.train.per_channel_noise);
    f.get("beta", cfg.train.beta);
    f.finish();
  }
  if (const json* m = top.find("memory")) {
    Fields f(*m, "memory");
    f.get("replay_capacity", cfg.train.replay_capacity);
    f.get("sbd_budget", cfg.train.sbd_budget);
    f.finish();
  }
  top.get("baseline", baseline);
  try {
    cfg.train.pipeline = parse_pipeline(baseline);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("baseline", e.what());
  }
  try {
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    throw ConfigError(msg.substr(0, msg.find(' ')), msg.substr(msg.find(' ') + 1));
  }

  if (const json* m = top.find("model")) {
    Fields f(*m, "model");
    f.get("conv1_channels", cfg.model.conv1_channels);
    f.get("feature_channels", cfg.model.feature_channels);
    f.get("hidden", cfg.model.hidden);
    f.get("extractor_adapter", cfg.model.extractor_adapter);
    f.get("attention_residual", cfg.model.attention_residual);
    f.finish();
  }
  if (cfg.model.conv1_channels == 0 || cfg.model.feature_channels == 0 || cfg.model.hidden == 0) {
    throw ConfigError("model", "layer widths must be positive");
  }

  if (const json* e = top.find("eval")) {
    Fields f(*e, "eval");
    std::string cadence = cfg.test_every_epoch ? "epoch" : "task";
    f.get("test_cadence", cadence);
    if (cadence != "epoch" && cadence != "task") throw ConfigError("eval.test_cadence", "expected \"epoch\" or \"task\"");
    cfg.test_every_epoch = cadence == "epoch";
    f.get("validation_size", cfg.validation_size);
    f.finish();
  }
  if (cfg.validation_size == 0) throw ConfigError("eval.validation_size", "must be positive");

  if (const json* s = top.find("seeds")) {
    if (!s->is_array() || s->empty()) throw ConfigError("seeds", "expected a nonempty list of integers");
    cfg.seeds.clear();
    for (std::size_t i = 0; i < s->size(); ++i) {
      const json& v = (*s)[i];
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw ConfigError("seeds[" + std::to_string(i) + "]", "expected a non-negative integer");
      }
      cfg.seeds.push_back(v.get<std::uint64_t>());
    }
    if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() != cfg.seeds.size()) {
      throw ConfigError("seeds", "duplicate seed");
    }
  }
  std::string out = cfg.output_dir.string();
  top.get("output_dir", out);
  if (out.empty()) throw ConfigError("output_dir", "must not be empty");
  cfg.output_dir = out;
  top.finish();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config", "no such file: " + path.string());
  return parse_experiment_config(read_text(path));
}

std::string experiment_config_json(const ExperimentConfig& cfg) {
  json j;
  if (cfg.dataset.train_path.empty()) {
    const auto& s = cfg.dataset.synthetic;
    j["dataset"]["synthetic"] = {{"num_classes", s.num_classes}, {"samples_per_class", s.samples_per_class},
                                 {"height", s.height},           {"width", s.width},
                                 {"channels", s.channels},       {"noise_std", s.noise_std},
                                 {"seed", cfg.dataset.synthetic_seed}};
  } else {
    j["dataset"] = {{"train", cfg.dataset.train_path.string()}, {"test", cfg.dataset.test_path.string()}};
  }
  j["stream"] = {{"tasks", cfg.stream.tasks}, {"n", cfg.stream.n}, {"m", cfg.stream.m},
                 {"batch_size", cfg.stream.batch_size}};
  const auto& t = cfg.train;
  j["train"] = {{"alpha", t.alpha},         {"lr", t.lr},
                {"epochs_per_task", t.epochs_per_task}, {"batch_size", t.batch_size},
                {"inner_steps", t.inner_steps}, {"lambda", t.lambda},
                {"per_channel_noise", t.per_channel_noise}, {"beta", t.beta}};
  j["memory"]["replay_capacity"] = t.replay_capacity;
  j["memory"]["sbd_budget"] = t.sbd_budget ? json(*t.sbd_budget) : json(nullptr);
  j["model"] = {{"conv1_channels", cfg.model.conv1_channels}, {"feature_channels", cfg.model.feature_channels},
                {"hidden", cfg.model.hidden},                 {"extractor_adapter", cfg.model.extractor_adapter},
                {"attention_residual", cfg.model.attention_residual}};
  j["eval"] = {{"test_cadence", cfg.test_every_epoch ? "epoch" : "task"}, {"validation_size", cfg.validation_size}};
  j["seeds"] = cfg.seeds;
  j["baseline"] = to_string(t.pipeline);
  j["output_dir"] = cfg.output_dir.string();
  return j.dump(2) + "\n";
}

SyntheticSpec parse_synthetic_spec(const std::string& json_text, std::uint64_t* seed, std::string* split) {
  const json root = parse_json(json_text, "spec");
  Fields f(root, "");
  SyntheticSpec spec;
  read_synthetic(f, spec);
  std::uint64_t s = 0;
  std::string sp = "train";
  f.get("seed", s);
  f.get("split", sp);
  f.finish();
  check_synthetic(spec, "spec");
  if (sp != "train" && sp != "test") throw ConfigError("split", "expected \"train\" or \"test\"");
  if (seed) *seed = s;
  if (split) *split = sp;
  return spec;
}

namespace {

struct Slice {
  Tensor<float> images;
  std::vector<Label> labels;
};

// First `limit` rows of a task in stream order.
Slice head_rows(const Task& task, std::size_t limit) {
  Slice s;
  std::vector<float> data;
  Shape shape;
  for (const auto& b : task.batches) {
    if (s.labels.size() >= limit) break;
    const std::size_t take = std::min(limit - s.labels.size(), b.size());
    const std::size_t row = b.images.numel() / b.size();
    data.insert(data.end(), b.images.data().begin(), b.images.data().begin() + static_cast<std::ptrdiff_t>(take * row));
    s.labels.insert(s.labels.end(), b.labels.begin(), b.labels.begin() + static_cast<std::ptrdiff_t>(take));
    shape = b.images.shape();
  }
  shape[0] = s.labels.size();
  s.images = Tensor<float>(shape, std::move(data));
  return s;
}

struct Datasets {
  Dataset train;
  Dataset test;
};

Datasets load_datasets(const ExperimentConfig& cfg) {
  if (cfg.dataset.train_path.empty()) {
    return {gen_synthetic(cfg.dataset.synthetic, cfg.dataset.synthetic_seed, "train"),
            gen_synthetic(cfg.dataset.synthetic, cfg.dataset.synthetic_seed, "test")};
  }
  Datasets d{load_dataset(cfg.dataset.train_path), load_dataset(cfg.dataset.test_path)};
  if (d.train.height() != d.test.height() || d.train.width() != d.test.width() ||
      d.train.channels() != d.test.channels() || d.train.num_classes != d.test.num_classes) {
    throw ConfigError("dataset", "train and test sets have different image shapes or class counts");
  }
  return d;
}

SeedResult run_seed(const ExperimentConfig& cfg, const Datasets& data, std::uint64_t seed, const fs::path& dir) {
  const TaskStream stream =
      iblurry_split(data.train, cfg.stream.tasks, cfg.stream.n, cfg.stream.m, cfg.stream.batch_size, seed);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  NetConfig nc = cfg.model;
  nc.input_height = data.train.height();
  nc.input_width = data.train.width();
  nc.input_channels = data.train.channels();
  nc.num_classes = data.train.num_classes;
  TrainerState state = make_trainer_state(nc, tc);

  SeedResult result;
  result.seed = seed;
  std::string rows;
  auto emit = [&](std::size_t task, std::size_t epoch, const std::string& split, const std::string& metric,
                  double value) {
    rows += format_csv_row(CsvRecord{seed, task, epoch, state.step, split, metric, value});
  };

  const Slice val_task0 = head_rows(stream.tasks.at(0), cfg.validation_size);
  std::set<Label> seen;
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    const Task& task = stream.tasks[t];
    for (const auto& [label, count] : task.class_counts()) seen.insert(label);
    const Slice val_current = head_rows(task, cfg.validation_size);
    const std::size_t last_epoch = tc.epochs_per_task - 1;

    train_task(state, task, tc, [&](const TrainerState& st, std::size_t epoch, double loss) {
      emit(t, epoch, "train", "loss", loss);
      const double acc_current = accuracy(nc, st.nets, val_current.images, val_current.labels);
      emit(t, epoch, to_string(Split::kValidationCurrent), "accuracy", acc_current);
      emit(t, epoch, to_string(Split::kValidationTask0), "accuracy",
           accuracy(nc, st.nets, val_task0.images, val_task0.labels));
      if (cfg.test_every_epoch || epoch == last_epoch) {
        const double acc_test = evaluate(nc, st.nets, data.test, seen);
        emit(t, epoch, to_string(Split::kTestSeen), "accuracy", acc_test);
        if (epoch == last_epoch) result.task_accuracies.push_back(acc_test);
      }
      if (epoch == last_epoch) result.task_end_validation.push_back(acc_current);
    });
    save_checkpoint(dir / ("task_" + std::to_string(t) + ".sbxm"), state.nets.all());
  }

  result.a_avg = a_avg(result.task_accuracies);
  result.a_fin = result.task_accuracies.back();
  result.budget = budget_report(state.replay, state.sbd);
  result.warnings = state.warnings;
  const std::size_t last_task = stream.tasks.size() - 1, last_epoch = tc.epochs_per_task - 1;
  emit(last_task, last_epoch, "summary", "a_avg", result.a_avg);
  emit(last_task, last_epoch, "summary", "a_fin", result.a_fin);
  emit(last_task, last_epoch, "summary", "replay_bytes", static_cast<double>(result.budget.replay_bytes));
  emit(last_task, last_epoch, "summary", "sbd_bytes", static_cast<double>(result.budget.sbd_bytes));
  emit(last_task, last_epoch, "summary", "total_bytes", static_cast<double>(result.budget.total_bytes));

  write_text(dir / "records.csv", std::string(kCsvHeader) + "\n" + rows);
  std::string warn;
  for (const auto& w : state.warnings) warn += w + "\n";
  write_text(dir / "warnings.txt", warn);
  write_text(dir / "DONE", "");
  return result;
}

// Rebuilds a finished seed's result from its CSV alone.
SeedResult read_seed(const fs::path& dir, std::uint64_t seed, std::size_t epochs_per_task) {
  SeedResult r;
  r.seed = seed;
  for (const auto& rec : parse_results_csv(read_text(dir / "records.csv"))) {
    if (rec.split == "summary") {
      if (rec.metric == "a_avg") r.a_avg = rec.value;
      if (rec.metric == "a_fin") r.a_fin = rec.value;
      if (rec.metric == "replay_bytes") r.budget.replay_bytes = static_cast<std::uint64_t>(std::llround(rec.value));
      if (rec.metric == "sbd_bytes") r.budget.sbd_bytes = static_cast<std::uint64_t>(std::llround(rec.value));
      if (rec.metric == "total_bytes") r.budget.total_bytes = static_cast<std::uint64_t>(std::llround(rec.value));
    } else if (rec.epoch + 1 == epochs_per_task) {
      if (rec.split == to_string(Split::kTestSeen)) r.task_accuracies.push_back(rec.value);
      if (rec.split == to_string(Split::kValidationCurrent)) r.task_end_validation.push_back(rec.value);
    }
  }
  return r;
}

std::string summary_csv(const std::vector<SeedResult>& seeds) {
  auto stats = [&](auto get) {
    double mean = 0.0;
    for (const auto& s : seeds) mean += get(s);
    mean /= static_cast<double>(seeds.size());
    double var = 0.0;
    for (const auto& s : seeds) var += (get(s) - mean) * (get(s) - mean);
    const double sd = seeds.size() > 1 ? std::sqrt(var / static_cast<double>(seeds.size() - 1)) : 0.0;
    return std::pair{mean, sd};
  };
  std::string out = "metric,mean,stdev,runs\n";
  auto row = [&](const char* name, auto get) {
    const auto [mean, sd] = stats(get);
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%zu\n", name, mean, sd, seeds.size());
    out += buf;
  };
  row("a_avg", [](const SeedResult& s) { return s.a_avg; });
  row("a_fin", [](const SeedResult& s) { return s.a_fin; });
  row("replay_bytes", [](const SeedResult& s) { return static_cast<double>(s.budget.replay_bytes); });
  row("sbd_bytes", [](const SeedResult& s) { return static_cast<double>(s.budget.sbd_bytes); });
  row("total_bytes", [](const SeedResult& s) { return static_cast<double>(s.budget.total_bytes); });
  return out;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
  RunResult out;
  out.run_dir = cfg.run_dir();
  fs::create_directories(out.run_dir);

  const std::string echo = experiment_config_json(cfg);
  const fs::path echo_path = out.run_dir / "config.json";
  if (fs::exists(echo_path) && read_text(echo_path) != echo) {
    throw ConfigError("output_dir", out.run_dir.string() + " holds a run with a different config");
  }
  write_text(echo_path, echo);

  json meta;
  meta["started_at"] = timestamp();
  const Datasets data = load_datasets(cfg);
  std::string results = std::string(kCsvHeader) + "\n";
  for (const std::uint64_t seed : cfg.seeds) {
    const fs::path dir = out.run_dir / ("seed_" + std::to_string(seed));
    const bool resumed = fs::exists(dir / "DONE");
    json& m = meta["seeds"][std::to_string(seed)];
    m["started_at"] = timestamp();
    if (resumed) {
      out.seeds.push_back(read_seed(dir, seed, cfg.train.epochs_per_task));
    } else {
      fs::create_directories(dir);
      std::cerr << "[" << to_string(cfg.train.pipeline) << "] seed " << seed << "\n";
      out.seeds.push_back(run_seed(cfg, data, seed, dir));
    }
    m["resumed"] = resumed;
    m["finished_at"] = timestamp();
    const std::string csv = read_text(dir / "records.csv");
    results += csv.substr(csv.find('\n') + 1);
  }
  write_text(out.run_dir / "results.csv", results);
  write_text(out.run_dir / "summary.csv", summary_csv(out.seeds));
  meta["finished_at"] = timestamp();
  write_text(out.run_dir / "metadata.json", meta.dump(2) + "\n");
  return out;
}

}  // namespace sbx
