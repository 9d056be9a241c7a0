// sbx: run Experience Blending experiments, build datasets and task splits, plot results.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "sbx/binary_io.hpp"
#include "sbx/experiment.hpp"
#include "sbx/results.hpp"
#include "sbx/stream.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  const auto bytes = sbx::read_file(p);
  return std::string(bytes.begin(), bytes.end());
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw sbx::ConfigError("--seeds", "expected a comma-separated list of non-negative integers");
    }
    out.push_back(std::stoull(item));
  }
  if (out.empty()) throw sbx::ConfigError("--seeds", "empty seed list");
  return out;
}

int cmd_run(const std::string& config_path, const std::string& baseline, const std::string& seeds) {
  sbx::ExperimentConfig cfg = sbx::load_experiment_config(config_path);
  if (!baseline.empty()) {
    try {
      cfg.train.pipeline = sbx::parse_pipeline(baseline);
    } catch (const std::invalid_argument& e) {
      throw sbx::ConfigError("--baseline", e.what());
    }
  }
  if (!seeds.empty()) cfg.seeds = parse_seed_list(seeds);
  const sbx::RunResult r = sbx::run_experiment(cfg);
  for (const auto& s : r.seeds) {
    std::printf("seed %llu  A_avg %.4f  A_fin %.4f  memory %llu bytes\n", static_cast<unsigned long long>(s.seed),
                s.a_avg, s.a_fin, static_cast<unsigned long long>(s.budget.total_bytes));
  }
  std::cout << "results in " << r.run_dir.string() << "\n";
  return 0;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out) {
  std::uint64_t seed = 0;
  std::string split;
  const sbx::SyntheticSpec spec = sbx::parse_synthetic_spec(read_text(spec_path), &seed, &split);
  const sbx::Dataset d = sbx::gen_synthetic(spec, seed, split);
  sbx::store_dataset(d, out);
  std::cout << "wrote " << d.size() << " " << split << " samples to " << out << "\n";
  return 0;
}

int cmd_split(const std::string& data, std::size_t tasks, int n, int m, std::uint64_t seed, std::size_t batch_size,
              const std::string& out) {
  const sbx::Dataset d = sbx::load_dataset(data);
  const sbx::TaskStream stream = sbx::iblurry_split(d, tasks, n, m, batch_size, seed);
  fs::create_directories(out);
  const std::string meta = sbx::stream_metadata_json(stream);
  sbx::write_file(fs::path(out) / "stream.json", std::vector<char>(meta.begin(), meta.end()));
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    std::vector<std::size_t> rows;
    for (const auto& b : stream.tasks[t].batches) rows.insert(rows.end(), b.source.begin(), b.source.end());
    sbx::Dataset part{d.gather(rows), d.gather_labels(rows), d.num_classes, d.split};
    sbx::store_dataset(part, fs::path(out) / ("task_" + std::to_string(t) + ".sbds"));
  }
  std::cout << "wrote " << stream.tasks.size() << " tasks to " << out << "\n";
  return 0;
}

int cmd_plot(const std::string& csv, const std::string& out) {
  sbx::write_plot_svg(sbx::parse_results_csv(read_text(csv)), out);
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experience Blending with synthetic boundary data"};
  app.require_subcommand(1);

  std::string config, baseline, seeds;
  auto* run = app.add_subcommand("run", "Train every seed of an experiment config");
  run->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--baseline", baseline, "ours | ftf-only | replay-only (overrides the config)");
  run->add_option("--seeds", seeds, "Comma-separated seeds (overrides the config)");

  std::string spec, gen_out;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as SBDS");
  gen->add_option("--spec", spec, "Synthetic dataset spec (JSON)")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output .sbds path")->required();

  std::string data, split_out;
  std::size_t tasks = 5, batch_size = 128;
  int n = 50, m = 10;
  std::uint64_t split_seed = 1;
  auto* split = app.add_subcommand("split", "Split an SBDS dataset into an i-Blurry task stream");
  split->add_option("--data", data, "Input .sbds")->required()->check(CLI::ExistingFile);
  split->add_option("--tasks", tasks, "Number of tasks")->required();
  split->add_option("--n", n, "Percent of classes that are disjoint")->required();
  split->add_option("--m", m, "Percent of blurry samples spread over other tasks")->required();
  split->add_option("--seed", split_seed, "Split seed")->required();
  split->add_option("--batch-size", batch_size, "Stream batch size");
  split->add_option("--out", split_out, "Output directory")->required();

  std::string csv, svg;
  auto* plot = app.add_subcommand("plot", "Render a results CSV as an SVG accuracy plot");
  plot->add_option("--csv", csv, "results.csv or a seed's records.csv")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", svg, "Output .svg path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config, baseline, seeds);
    if (gen->parsed()) return cmd_gen_data(spec, gen_out);
    if (split->parsed()) return cmd_split(data, tasks, n, m, split_seed, batch_size, split_out);
    if (plot->parsed()) return cmd_plot(csv, svg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
