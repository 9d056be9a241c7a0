#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sbx {

/// One row of a results CSV (seed,task,epoch,step,split,metric,value).
struct CsvRecord {
  std::uint64_t seed = 0;
  std::size_t task = 0;
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
};

/// Row text with a trailing LF; value printed with 6 decimals.
std::string format_csv_row(const CsvRecord& r);

/// Parses CSV text that starts with the standard header. Errors carry the
/// 1-based line number ("line 7: ...") and are thrown as std::runtime_error.
std::vector<CsvRecord> parse_results_csv(const std::string& text);

/// Writes an SVG line plot: for each seed, current-task validation, task-0
/// validation and seen-class test accuracy against the epoch index, with a
/// vertical rule at each task boundary. Throws (writing nothing) when there
/// are no accuracy records.
void write_plot_svg(const std::vector<CsvRecord>& records, const std::string& out_path);

}  // namespace sbx
