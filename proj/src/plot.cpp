#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "sbx/results.hpp"

namespace sbx {

namespace {

struct SeriesStyle {
  const char* split;
  const char* label;
  const char* color;
  const char* dash;  // empty for solid
};

// Current task dot-dashed, task 0 dashed, seen-class test solid.
constexpr SeriesStyle kSeries[] = {
    {"validation-current", "current task (val)", "#1f77b4", "6,3,1,3"},
    {"validation-task0", "task 0 (val)", "#d62728", "6,4"},
    {"test-seen", "seen classes (test)", "#2ca02c", ""},
};

constexpr double kWidth = 720, kHeight = 400;
constexpr double kLeft = 56, kRight = 180, kTop = 20, kBottom = 44;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

void write_plot_svg(const std::vector<CsvRecord>& records, const std::string& out_path) {
  std::set<std::pair<std::size_t, std::size_t>> ticks;  // (task, epoch)
  std::set<std::uint64_t> seeds;
  for (const auto& r : records) {
    if (r.metric != "accuracy") continue;
    ticks.emplace(r.task, r.epoch);
    seeds.insert(r.seed);
  }
  if (ticks.empty()) throw std::runtime_error("plot: no accuracy records to draw");

  std::map<std::pair<std::size_t, std::size_t>, std::size_t> x_index;
  for (const auto& t : ticks) x_index.emplace(t, x_index.size());
  const double span = static_cast<double>(std::max<std::size_t>(x_index.size() - 1, 1));
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  auto px = [&](std::size_t i) { return kLeft + plot_w * (x_index.size() == 1 ? 0.5 : static_cast<double>(i) / span); };
  auto py = [&](double acc) { return kTop + plot_h * (1.0 - std::clamp(acc, 0.0, 1.0)); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // Axes and y grid.
  for (int k = 0; k <= 4; ++k) {
    const double acc = k / 4.0;
    svg << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + plot_w << "\" y1=\"" << num(py(acc)) << "\" y2=\""
        << num(py(acc)) << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(py(acc) + 4) << "\" text-anchor=\"end\">" << num(acc)
        << "</text>\n";
  }
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << num(plot_w) << "\" height=\"" << num(plot_h)
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
  svg << "<text x=\"" << num(kLeft + plot_w / 2) << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">epoch (all tasks)</text>\n";
  svg << "<text transform=\"translate(14," << num(kTop + plot_h / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">accuracy</text>\n";

  // Task boundaries.
  std::size_t prev_task = ticks.begin()->first;
  for (const auto& [key, i] : x_index) {
    if (key.first == prev_task) continue;
    prev_task = key.first;
    const double x = (px(i - 1) + px(i)) / 2;
    svg << "<line class=\"task-boundary\" x1=\"" << num(x) << "\" x2=\"" << num(x) << "\" y1=\"" << kTop
        << "\" y2=\"" << num(kTop + plot_h) << "\" stroke=\"#888\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << num(x + 3) << "\" y=\"" << kTop + 12 << "\" fill=\"#666\">T" << key.first << "</text>\n";
  }

  std::size_t seed_pos = 0;
  for (const std::uint64_t seed : seeds) {
    const double opacity = 1.0 - 0.5 * static_cast<double>(seed_pos) / static_cast<double>(std::max<std::size_t>(seeds.size(), 2));
    for (const auto& style : kSeries) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& r : records) {
        if (r.seed != seed || r.split != style.split || r.metric != "accuracy") continue;
        pts.emplace_back(px(x_index.at({r.task, r.epoch})), py(r.value));
      }
      svg << "<g class=\"series\" data-seed=\"" << seed << "\" data-split=\"" << style.split << "\" opacity=\""
          << num(opacity) << "\">\n";
      if (pts.size() > 1) {
        svg << "<polyline fill=\"none\" stroke=\"" << style.color << "\" stroke-width=\"1.5\"";
        if (*style.dash) svg << " stroke-dasharray=\"" << style.dash << "\"";
        svg << " points=\"";
        for (const auto& [x, y] : pts) svg << num(x) << ',' << num(y) << ' ';
        svg << "\"/>\n";
      }
      if (pts.size() == 1) {
        svg << "<circle cx=\"" << num(pts[0].first) << "\" cy=\"" << num(pts[0].second) << "\" r=\"3\" fill=\""
            << style.color << "\"/>\n";
      }
      svg << "</g>\n";
    }
    ++seed_pos;
  }

  // Legend.
  double ly = kTop + 10;
  const double lx = kLeft + plot_w + 16;
  for (const auto& style : kSeries) {
    svg << "<line x1=\"" << lx << "\" x2=\"" << lx + 24 << "\" y1=\"" << ly << "\" y2=\"" << ly << "\" stroke=\""
        << style.color << "\" stroke-width=\"1.5\"";
    if (*style.dash) svg << " stroke-dasharray=\"" << style.dash << "\"";
    svg << "/>\n<text x=\"" << lx + 30 << "\" y=\"" << ly + 4 << "\">" << style.label << "</text>\n";
    ly += 18;
  }
  svg << "<text x=\"" << lx << "\" y=\"" << ly + 4 << "\" fill=\"#666\">" << seeds.size() << " seed(s)</text>\n";
  svg << "</svg>\n";

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("plot: cannot open " + out_path);
  out << svg.str();
  if (!out) throw std::runtime_error("plot: write failed for " + out_path);
}

}  // namespace sbx
