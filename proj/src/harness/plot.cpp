#include "cegm/harness/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "cegm/error.hpp"
#include "cegm/harness/compare.hpp"
#include "cegm/harness/report.hpp"

namespace cegm::harness {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo, hi;
};

Range padded(double lo, double hi) {
  if (!(hi > lo)) {
    const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
    return {lo - pad, hi + pad};
  }
  return {lo, hi};
}

void header(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
     << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight) << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"16\">"
     << escape(title) << "</text>\n";
}

void axes(std::ostringstream& os, std::optional<Range> x, Range y, const std::string& xl, const std::string& yl) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  os << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x1) << "\" y2=\"" << num(y0)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x0) << "\" y2=\"" << num(y1)
     << "\" stroke=\"black\"/>\n";
  auto label = [&](double px, double py, const std::string& text, const char* anchor) {
    os << "<text x=\"" << num(px) << "\" y=\"" << num(py) << "\" text-anchor=\"" << anchor
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(text) << "</text>\n";
  };
  if (x) {
    label(x0, y0 + 16, num(x->lo), "middle");
    label(x1, y0 + 16, num(x->hi), "middle");
  }
  label(x0 - 6, y0 + 4, num(y.lo), "end");
  label(x0 - 6, y1 + 4, num(y.hi), "end");
  if (!xl.empty()) label((x0 + x1) / 2, kHeight - 14, xl, "middle");
  os << "<text x=\"16\" y=\"" << num((y0 + y1) / 2) << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
     << "font-size=\"12\" transform=\"rotate(-90 16 " << num((y0 + y1) / 2) << ")\">" << escape(yl) << "</text>\n";
}

template <typename It>
void write_file(const std::filesystem::path& p, const std::string& text, It& files) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
  files.push_back(p);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto c = line.find(',', start);
    out.push_back(line.substr(start, c == std::string::npos ? std::string::npos : c - start));
    if (c == std::string::npos) break;
    start = c + 1;
  }
  return out;
}

double to_num(const std::string& s) {
  if (s == "nan") return std::nan("");
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("bad numeric cell '" + s + "'");
  return v;
}

}  // namespace

std::string render_svg(const LineChart& chart) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : chart.series)
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (!std::isfinite(xmin)) xmin = xmax = ymin = ymax = 0.0;
  const Range xr = padded(xmin, xmax), yr = padded(ymin, ymax);
  std::ostringstream os;
  header(os, chart.title);
  axes(os, xr, yr, chart.x_label, chart.y_label);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  std::size_t color = 0;
  for (const auto& s : chart.series) {
    std::string pts;
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      const double px = kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw;
      const double py = kTop + (1.0 - (y - yr.lo) / (yr.hi - yr.lo)) * ph;
      if (!pts.empty()) pts += ' ';
      pts += num(px) + ',' + num(py);
    }
    if (pts.empty()) continue;
    const char* c = kPalette[color % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"" << pts << "\"/>\n";
    const double ly = kTop + 16.0 * static_cast<double>(color);
    os << "<text x=\"" << num(kWidth - kRight + 10) << "\" y=\"" << num(ly + 4) << "\" fill=\"" << c
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape(s.name) << "</text>\n";
    ++color;
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_svg(const BarChart& chart) {
  double ymax = 0.0;
  for (const auto& [_, v] : chart.bars)
    if (std::isfinite(v)) ymax = std::max(ymax, v);
  if (ymax <= 0.0) ymax = 1.0;
  std::ostringstream os;
  header(os, chart.title);
  axes(os, std::nullopt, Range{0.0, ymax}, "", chart.y_label);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const double slot = chart.bars.empty() ? pw : pw / static_cast<double>(chart.bars.size());
  for (std::size_t i = 0; i < chart.bars.size(); ++i) {
    const auto& [name, v] = chart.bars[i];
    const double h = std::isfinite(v) ? v / ymax * ph : 0.0;
    const double x = kLeft + slot * static_cast<double>(i) + slot * 0.15;
    os << "<rect x=\"" << num(x) << "\" y=\"" << num(kTop + ph - h) << "\" width=\"" << num(slot * 0.7)
       << "\" height=\"" << num(h) << "\" fill=\"" << kPalette[i % std::size(kPalette)] << "\"/>\n";
    os << "<text x=\"" << num(x + slot * 0.35) << "\" y=\"" << num(kTop + ph + 30) << "\" text-anchor=\"middle\" "
       << "font-family=\"sans-serif\" font-size=\"11\">" << escape(name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

PlotResult emit_plots(const std::filesystem::path& csv, const std::filesystem::path& out_dir) {
  std::ifstream in(csv);
  if (!in) throw FormatError("cannot read " + csv.string());
  std::string head;
  PlotResult result;
  if (!std::getline(in, head) || head.empty()) {
    result.warning = csv.string() + " is empty; no plots written";
    return result;
  }
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) rows.push_back(split(line));
  if (rows.empty()) {
    result.warning = csv.string() + " has no data rows; no plots written";
    return result;
  }
  std::filesystem::create_directories(out_dir);

  if (head == kComparisonHeader) {
    const auto cols = split(head);
    auto col = [&](const char* name) {
      return static_cast<std::size_t>(std::find(cols.begin(), cols.end(), name) - cols.begin());
    };
    const std::size_t c_opt = col("optimizer"), c_noise = col("noise"), c_len = col("seq_len"),
                      c_acc = col("eval_accuracy_mean"), c_conv = col("convergence_epochs_mean");
    for (const auto& r : rows)
      if (r.size() != cols.size()) throw FormatError("comparison row has " + std::to_string(r.size()) + " cells");
    // optimizer -> x -> (sum, count)
    using Acc = std::map<std::string, std::map<double, std::pair<double, int>>>;
    Acc by_noise, by_len;
    std::map<std::string, std::pair<double, int>> conv;
    for (const auto& r : rows) {
      const double acc = to_num(r[c_acc]);
      if (!std::isnan(acc)) {
        auto& a = by_noise[r[c_opt]][to_num(r[c_noise])];
        a.first += acc;
        ++a.second;
        auto& b = by_len[r[c_opt]][to_num(r[c_len])];
        b.first += acc;
        ++b.second;
      }
      const double ce = to_num(r[c_conv]);
      auto& c = conv[r[c_opt]];
      if (!std::isnan(ce)) {
        c.first += ce;
        ++c.second;
      }
    }
    auto to_chart = [](const Acc& acc, std::string title, std::string xl) {
      LineChart ch{std::move(title), std::move(xl), "eval accuracy", {}};
      for (const auto& [opt, pts] : acc) {
        Series s{opt, {}};
        for (const auto& [x, sc] : pts) s.points.emplace_back(x, sc.first / sc.second);
        ch.series.push_back(std::move(s));
      }
      return ch;
    };
    write_file(out_dir / "noise_accuracy.svg", render_svg(to_chart(by_noise, "Accuracy vs input noise", "noise level (%)")),
               result.files);
    write_file(out_dir / "seq_len_accuracy.svg",
               render_svg(to_chart(by_len, "Copy accuracy vs sequence length", "sequence length")), result.files);
    BarChart bars{"Mean convergence epochs", "epochs", {}};
    for (const auto& [opt, c] : conv)
      bars.bars.emplace_back(opt, c.second ? c.first / c.second : std::nan(""));
    write_file(out_dir / "convergence.svg", render_svg(bars), result.files);
    return result;
  }
  if (head == kStepsHeader) {
    LineChart loss{"Training loss", "step", "loss", {{"loss", {}}, {"l_cegm", {}}}};
    LineChart lam{"Entanglement coefficient", "step", "lambda", {{"lambda", {}}}};
    for (const auto& r : rows) {
      if (r.size() != 9) throw FormatError("steps row has " + std::to_string(r.size()) + " cells");
      const double step = to_num(r[0]);
      loss.series[0].points.emplace_back(step, to_num(r[2]));
      loss.series[1].points.emplace_back(step, to_num(r[3]));
      lam.series[0].points.emplace_back(step, to_num(r[5]));
    }
    write_file(out_dir / "loss_curve.svg", render_svg(loss), result.files);
    write_file(out_dir / "lambda.svg", render_svg(lam), result.files);
    return result;
  }
  throw FormatError(csv.string() + ": unrecognized CSV header");
}

}  // namespace cegm::harness
