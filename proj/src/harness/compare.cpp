#include "cegm/harness/compare.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <tuple>

#include "cegm/error.hpp"
#include "cegm/harness/config.hpp"
#include "cegm/harness/runner.hpp"

namespace cegm::harness {

RunRecord load_run(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kManifestFile;
  if (!std::filesystem::exists(manifest_path)) throw FormatError("no manifest in " + dir.string());
  KeyValues m = KeyValues::load(manifest_path);
  if (m.str("status", "") != "ok") throw FormatError("run in " + dir.string() + " did not complete");
  RunRecord r;
  r.task = m.str("config.task");
  r.optimizer = m.str("config.optimizer");
  r.noise = static_cast<int>(m.integer("config.noise"));
  r.seq_len = m.integer("config.seq_len");
  r.seed = m.integer("config.seed");
  r.epochs = m.integer("config.epochs");
  std::ifstream in(dir / kEpochsFile);
  if (!in) throw FormatError("no epochs.csv in " + dir.string());
  r.epoch_rows = read_epochs_csv(in);
  const auto metric =
      m.str("config.convergence_metric") == "loss" ? ConvergenceMetric::kLoss : ConvergenceMetric::kAccuracy;
  r.convergence_epochs = convergence_epochs(r.epoch_rows, m.number("config.convergence_threshold"), metric);
  return r;
}

std::vector<RunRecord> load_runs(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> dirs;
  if (std::filesystem::exists(root / kManifestFile)) dirs.push_back(root);
  if (std::filesystem::is_directory(root))
    for (const auto& e : std::filesystem::recursive_directory_iterator(root))
      if (e.is_regular_file() && e.path().filename() == kManifestFile && e.path().parent_path() != root)
        dirs.push_back(e.path().parent_path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<RunRecord> out;
  for (const auto& d : dirs) {
    KeyValues m = KeyValues::load(d / kManifestFile);
    if (m.str("status", "") == "ok") out.push_back(load_run(d));
  }
  return out;
}

Stat mean_sd(const std::vector<double>& values) {
  std::vector<double> v;
  for (double x : values)
    if (!std::isnan(x)) v.push_back(x);
  if (v.empty()) return Stat{std::nan(""), std::nan("")};
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  if (v.size() == 1) return Stat{mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return Stat{mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::vector<ComparisonRow> compare_runs(const std::vector<RunRecord>& runs) {
  if (runs.empty()) throw ConfigError("compare: no completed runs");
  for (const auto& r : runs) {
    if (r.task != runs.front().task)
      throw ConfigError("compare: mixed tasks '" + runs.front().task + "' and '" + r.task + "'");
    if (r.epochs != runs.front().epochs)
      throw ConfigError("compare: runs disagree on epochs (" + std::to_string(runs.front().epochs) + " vs " +
                        std::to_string(r.epochs) + ")");
  }
  using Key = std::tuple<std::string, std::string, int, std::uint64_t>;
  std::vector<std::pair<Key, std::vector<const RunRecord*>>> groups;
  for (const auto& r : runs) {
    Key k{r.task, r.optimizer, r.noise, r.seq_len};
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == k; });
    if (it == groups.end()) groups.push_back({k, {&r}});
    else it->second.push_back(&r);
  }
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<ComparisonRow> out;
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end(), [](const RunRecord* a, const RunRecord* b) { return a->seed < b->seed; });
    ComparisonRow row;
    std::tie(row.task, row.optimizer, row.noise, row.seq_len) = key;
    std::vector<double> tl, el, ea, pp, ce;
    for (const RunRecord* r : members) {
      row.seeds.push_back(r->seed);
      const double nan = std::nan("");
      const EpochRow* last = r->epoch_rows.empty() ? nullptr : &r->epoch_rows.back();
      tl.push_back(last ? last->train_loss : nan);
      el.push_back(last ? last->eval_loss : nan);
      ea.push_back(last ? last->eval_accuracy : nan);
      pp.push_back(last ? last->perplexity : nan);
      if (r->convergence_epochs) {
        ce.push_back(static_cast<double>(*r->convergence_epochs));
        ++row.converged_runs;
      }
    }
    row.final_train_loss = mean_sd(tl);
    row.eval_loss = mean_sd(el);
    row.eval_accuracy = mean_sd(ea);
    row.perplexity = mean_sd(pp);
    row.convergence_epochs = mean_sd(ce);
    out.push_back(std::move(row));
  }
  return out;
}

void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows) {
  auto cell = [](double v) { return std::isnan(v) ? std::string("nan") : format_double(v); };
  os << kComparisonHeader << '\n';
  for (const auto& r : rows) {
    std::string seeds;
    for (std::size_t i = 0; i < r.seeds.size(); ++i) seeds += (i ? ";" : "") + std::to_string(r.seeds[i]);
    os << r.task << ',' << r.optimizer << ',' << r.noise << ',' << r.seq_len << ',' << r.seeds.size() << ','
       << seeds << ',' << cell(r.final_train_loss.mean) << ',' << cell(r.final_train_loss.sd) << ','
       << cell(r.eval_loss.mean) << ',' << cell(r.eval_loss.sd) << ',' << cell(r.eval_accuracy.mean) << ','
       << cell(r.eval_accuracy.sd) << ',' << cell(r.perplexity.mean) << ',' << cell(r.perplexity.sd) << ','
       << cell(r.convergence_epochs.mean) << ',' << cell(r.convergence_epochs.sd) << ',' << r.converged_runs
       << '\n';
  }
}

}  // namespace cegm::harness
