#include "sbx/results.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>
#include <string_view>

namespace sbx {

namespace {

constexpr std::string_view kHeader = "seed,task,epoch,step,split,metric,value";

std::runtime_error line_error(std::size_t line, const std::string& what) {
  return std::runtime_error("line " + std::to_string(line) + ": " + what);
}

template <typename Int>
Int parse_int(std::string_view field, const char* name, std::size_t line) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw line_error(line, std::string("bad ") + name + " \"" + std::string(field) + "\"");
  }
  return v;
}

double parse_double(std::string_view field, std::size_t line) {
  // from_chars for double is missing from older libstdc++; strtod on a copy is enough here.
  const std::string s(field);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw line_error(line, "bad value \"" + s + "\"");
  return v;
}

}  // namespace

std::string format_csv_row(const CsvRecord& r) {
  char value[64];
  std::snprintf(value, sizeof value, "%.6f", r.value);
  return std::to_string(r.seed) + ',' + std::to_string(r.task) + ',' + std::to_string(r.epoch) + ',' +
         std::to_string(r.step) + ',' + r.split + ',' + r.metric + ',' + value + '\n';
}

std::vector<CsvRecord> parse_results_csv(const std::string& text) {
  std::vector<CsvRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line(text.data() + pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != kHeader) throw line_error(line_no, "expected header \"" + std::string(kHeader) + "\"");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;

    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 7) {
      throw line_error(line_no, "expected 7 fields, got " + std::to_string(fields.size()));
    }
    CsvRecord r;
    r.seed = parse_int<std::uint64_t>(fields[0], "seed", line_no);
    r.task = parse_int<std::size_t>(fields[1], "task", line_no);
    r.epoch = parse_int<std::size_t>(fields[2], "epoch", line_no);
    r.step = parse_int<std::uint64_t>(fields[3], "step", line_no);
    r.split = std::string(fields[4]);
    r.metric = std::string(fields[5]);
    if (r.split.empty() || r.metric.empty()) throw line_error(line_no, "empty split or metric");
    r.value = parse_double(fields[6], line_no);
    out.push_back(std::move(r));
  }
  if (!header_seen) throw line_error(1, "missing header");
  return out;
}

}  // namespace sbx
