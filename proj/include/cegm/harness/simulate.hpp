#pragma once

#include <filesystem>

#include "cegm/analysis.hpp"
#include "cegm/harness/config.hpp"

namespace cegm::harness {

// Keys: gamma, delta, c_matrix (d*d values, row-major), g0 (d*k values,
// row-major), k (default 1), t_end, dt, method (euler|rk4, default rk4),
// output (trajectory CSV path, default trajectory.csv).
struct OdeRun {
  OdeConfig config;
  OdeMethod method;
  std::filesystem::path output;
};

// Throws ConfigError on missing keys, non-square data, or an invalid matrix.
OdeRun ode_run_from(const KeyValues& kv);

struct OdeOutcome {
  Stability verdict;
  double margin;                 // gamma * lambda_max(C) - delta
  double endpoint_error;         // max |integrated - closed form| at t_end
  std::filesystem::path output;
};

// Integrates, writes the trajectory CSV, and compares to the closed form.
OdeOutcome simulate_ode(const OdeRun& run);

}  // namespace cegm::harness
