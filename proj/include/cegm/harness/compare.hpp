#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cegm/harness/report.hpp"

namespace cegm::harness {

// One finished run as seen by the comparison step.
struct RunRecord {
  std::string task;
  std::string optimizer;
  int noise = 0;
  std::uint64_t seq_len = 0;
  std::uint64_t seed = 0;
  std::uint64_t epochs = 0;
  std::vector<EpochRow> epoch_rows;
  std::optional<std::uint64_t> convergence_epochs;
};

// Reads manifest.txt + epochs.csv from a run directory. Throws FormatError
// for missing or failed runs.
RunRecord load_run(const std::filesystem::path& dir);
// Every run directory below `root` (searched recursively) holding a
// status=ok manifest, in sorted path order.
std::vector<RunRecord> load_runs(const std::filesystem::path& root);

struct Stat {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1); 0 for n == 1
};

// NaN entries are skipped; NaN mean when nothing remains.
Stat mean_sd(const std::vector<double>& values);

struct ComparisonRow {
  std::string task;
  std::string optimizer;
  int noise = 0;
  std::uint64_t seq_len = 0;
  std::vector<std::uint64_t> seeds;
  Stat final_train_loss;
  Stat eval_loss;
  Stat eval_accuracy;
  Stat perplexity;
  Stat convergence_epochs;  // over runs that converged
  std::size_t converged_runs = 0;
};

inline constexpr const char* kComparisonHeader =
    "task,optimizer,noise,seq_len,n_seeds,seeds,final_train_loss_mean,final_train_loss_sd,"
    "eval_loss_mean,eval_loss_sd,eval_accuracy_mean,eval_accuracy_sd,perplexity_mean,perplexity_sd,"
    "convergence_epochs_mean,convergence_epochs_sd,converged_runs";

// Groups by (task, optimizer, noise, seq_len), sorted by those keys.
// Throws ConfigError if runs disagree on task or epoch count, or if empty.
std::vector<ComparisonRow> compare_runs(const std::vector<RunRecord>& runs);

void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows);

}  // namespace cegm::harness
