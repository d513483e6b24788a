#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "cegm/harness/config.hpp"

namespace cegm::harness {

// steps.csv columns, in order.
inline constexpr const char* kStepsHeader =
    "step,epoch,loss,l_cegm,e_scalar,lambda,grad_norm,update_norm,degenerate";
// epochs.csv columns, in order.
inline constexpr const char* kEpochsHeader = "epoch,train_loss,eval_loss,eval_accuracy,perplexity";

struct StepRow {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double loss = 0.0;
  double l_cegm = 0.0;
  double e_scalar = 0.0;
  double lambda = 0.0;
  double grad_norm = 0.0;
  double update_norm = 0.0;
  bool degenerate = false;
};

struct EpochRow {
  std::uint64_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double eval_loss = 0.0;      // mean eval cross-entropy (quadratic: L(theta))
  double eval_accuracy = 0.0;  // NaN for the quadratic task
  double perplexity = 0.0;     // exp(eval_loss)
};

struct RunSummary {
  std::optional<std::uint64_t> convergence_epochs;
  double final_train_loss = 0.0;
  double final_eval_loss = 0.0;
  double final_eval_accuracy = 0.0;
  double final_perplexity = 0.0;
  double wall_time_s = 0.0;
  double steps_per_second = 0.0;
  std::uint64_t state_bytes = 0;
};

struct RunReport {
  std::vector<StepRow> steps;
  std::vector<EpochRow> epochs;
  RunSummary summary;
};

void write_steps_csv(std::ostream& os, const std::vector<StepRow>& rows);
void write_epochs_csv(std::ostream& os, const std::vector<EpochRow>& rows);
// Throws FormatError if the header differs from kEpochsHeader or a row is malformed.
std::vector<EpochRow> read_epochs_csv(std::istream& is);
std::vector<StepRow> read_steps_csv(std::istream& is);

// First 1-based epoch whose metric crosses the threshold: eval_accuracy >=
// threshold, or eval_loss <= threshold. nullopt when never reached.
std::optional<std::uint64_t> convergence_epochs(const std::vector<EpochRow>& epochs, double threshold,
                                                ConvergenceMetric metric);

}  // namespace cegm::harness
