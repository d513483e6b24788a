#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cegm/harness/config.hpp"
#include "cegm/harness/report.hpp"

namespace cegm::harness {

// Files written into RunConfig::output_dir.
inline constexpr const char* kStepsFile = "steps.csv";
inline constexpr const char* kEpochsFile = "epochs.csv";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";
inline constexpr const char* kManifestFile = "manifest.txt";
inline constexpr const char* kComparisonFile = "comparison.csv";

// Runs one training experiment and writes steps.csv, epochs.csv,
// checkpoint.bin and manifest.txt. On failure a manifest with status=failed
// and the error text is written before the exception propagates.
RunReport run_experiment(const RunConfig& cfg);

struct SweepGrid {
  std::vector<OptimizerKind> optimizers;
  std::vector<int> noise_levels;
  std::vector<std::uint64_t> seq_lens;
  std::vector<std::uint64_t> seeds;
};

// Grid keys sweep_optimizers / sweep_noise / sweep_seq_len, defaulting to the
// full schedules. Seeds come from the command line.
SweepGrid sweep_grid_from(const KeyValues& kv, std::vector<std::uint64_t> seeds);

// Runs every grid cell under base.output_dir/<task>_<opt>_n<noise>_L<len>_s<seed>
// and writes base.output_dir/comparison.csv. Runs execute on `jobs` threads.
// Returns the comparison CSV path.
std::filesystem::path run_sweep(const RunConfig& base, const SweepGrid& grid, unsigned jobs = 1);

}  // namespace cegm::harness
