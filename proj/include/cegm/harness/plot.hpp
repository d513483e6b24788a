#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace cegm::harness {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

struct BarChart {
  std::string title;
  std::string y_label;
  std::vector<std::pair<std::string, double>> bars;
};

// Deterministic SVG text: fixed canvas, fixed palette, coordinates printed
// with two decimals. One <polyline> per non-empty series.
std::string render_svg(const LineChart& chart);
std::string render_svg(const BarChart& chart);

struct PlotResult {
  std::vector<std::filesystem::path> files;
  std::string warning;  // non-empty when nothing was drawn
};

// Reads a comparison.csv (noise/seq_len accuracy lines, convergence bars) or
// a steps.csv (loss curve, lambda trajectory), chosen by the header, and
// writes SVGs into out_dir. Empty input yields no files and a warning.
// Throws FormatError on an unrecognized header.
PlotResult emit_plots(const std::filesystem::path& csv, const std::filesystem::path& out_dir);

}  // namespace cegm::harness
