#include "cegm/harness/report.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "cegm/error.hpp"

namespace cegm::harness {

namespace {

// format_double spells NaN as "nan"; keep that spelling in the CSVs.
std::string cell(double v) { return std::isnan(v) ? std::string("nan") : format_double(v); }

double parse_cell(const std::string& s) {
  if (s == "nan") return std::nan("");
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("bad numeric CSV cell '" + s + "'");
  return v;
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

void write_steps_csv(std::ostream& os, const std::vector<StepRow>& rows) {
  os << kStepsHeader << '\n';
  for (const auto& r : rows)
    os << r.step << ',' << r.epoch << ',' << cell(r.loss) << ',' << cell(r.l_cegm) << ','
       << cell(r.e_scalar) << ',' << cell(r.lambda) << ',' << cell(r.grad_norm) << ','
       << cell(r.update_norm) << ',' << (r.degenerate ? 1 : 0) << '\n';
}

void write_epochs_csv(std::ostream& os, const std::vector<EpochRow>& rows) {
  os << kEpochsHeader << '\n';
  for (const auto& r : rows)
    os << r.epoch << ',' << cell(r.train_loss) << ',' << cell(r.eval_loss) << ','
       << cell(r.eval_accuracy) << ',' << cell(r.perplexity) << '\n';
}

std::vector<EpochRow> read_epochs_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kEpochsHeader) throw FormatError("epochs.csv header mismatch");
  std::vector<EpochRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split_row(line);
    if (c.size() != 5) throw FormatError("epochs.csv row has " + std::to_string(c.size()) + " cells");
    rows.push_back(EpochRow{static_cast<std::uint64_t>(parse_cell(c[0])), parse_cell(c[1]), parse_cell(c[2]),
                            parse_cell(c[3]), parse_cell(c[4])});
  }
  return rows;
}

std::vector<StepRow> read_steps_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kStepsHeader) throw FormatError("steps.csv header mismatch");
  std::vector<StepRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split_row(line);
    if (c.size() != 9) throw FormatError("steps.csv row has " + std::to_string(c.size()) + " cells");
    rows.push_back(StepRow{static_cast<std::uint64_t>(parse_cell(c[0])),
                           static_cast<std::uint64_t>(parse_cell(c[1])), parse_cell(c[2]), parse_cell(c[3]),
                           parse_cell(c[4]), parse_cell(c[5]), parse_cell(c[6]), parse_cell(c[7]),
                           c[8] == "1"});
  }
  return rows;
}

std::optional<std::uint64_t> convergence_epochs(const std::vector<EpochRow>& epochs, double threshold,
                                                ConvergenceMetric metric) {
  for (const auto& e : epochs) {
    const bool crossed = metric == ConvergenceMetric::kAccuracy ? e.eval_accuracy >= threshold
                                                                : e.eval_loss <= threshold;
    if (crossed) return e.epoch;
  }
  return std::nullopt;
}

}  // namespace cegm::harness
