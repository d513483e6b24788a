#pragma once

// Flat `key = value` configuration files.
//
// One assignment per line; '#' starts a comment; blank lines are ignored;
// keys are unique. Lists are comma separated. Relative paths are resolved
// against the directory of the file they appear in.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cegm/analysis.hpp"
#include "cegm/models.hpp"
#include "cegm/optimizer.hpp"

namespace cegm::harness {

class KeyValues {
 public:
  static KeyValues parse(std::string_view text, const std::string& origin = "<string>");
  static KeyValues load(const std::filesystem::path& path);

  bool has(std::string_view key) const;
  std::string str(std::string_view key) const;
  std::string str(std::string_view key, std::string_view fallback) const;
  double number(std::string_view key) const;
  double number(std::string_view key, double fallback) const;
  std::uint64_t integer(std::string_view key) const;
  std::uint64_t integer(std::string_view key, std::uint64_t fallback) const;
  std::vector<double> numbers(std::string_view key) const;
  std::vector<std::string> list(std::string_view key) const;

  void set(std::string key, std::string value);
  // Keys present but not in `known`, for strict validation.
  std::vector<std::string> unknown_keys(const std::vector<std::string_view>& known) const;

  const std::map<std::string, std::string>& entries() const noexcept { return values_; }
  const std::filesystem::path& base_dir() const noexcept { return base_dir_; }
  std::filesystem::path path(std::string_view key) const;

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
  std::string origin_;
};

std::vector<std::string> split_list(std::string_view s);
// Parses `a,b,c` into integers. Throws ConfigError on malformed entries.
std::vector<std::uint64_t> parse_u64_list(std::string_view s);

enum class TaskKind { kCharLm, kCopy, kQuadratic };
std::string_view task_name(TaskKind t) noexcept;
TaskKind parse_task(std::string_view s);

enum class ConvergenceMetric { kAccuracy, kLoss };

struct RunConfig {
  TaskKind task = TaskKind::kQuadratic;
  OptimizerKind optimizer = OptimizerKind::kCegm;
  CEGMConfig cegm;
  double beta = 0.1;
  KernelKind kernel = KernelKind::kCosine;
  std::uint64_t seed = 0;
  std::uint64_t epochs = 5;
  std::uint64_t batch_size = 32;
  int noise = 0;
  std::uint64_t seq_len = 8;
  double convergence_threshold = 0.5;
  ConvergenceMetric convergence_metric = ConvergenceMetric::kAccuracy;
  std::filesystem::path output_dir = "run";

  // charlm
  std::filesystem::path corpus;
  CharLMSpec model;
  // copy
  std::uint64_t train_batches = 16;
  std::uint64_t eval_batches = 4;
  // quadratic
  std::uint64_t quad_dim = 2;
  double quad_conditioning = 1.0;
  std::vector<double> theta0;  // empty: seeded normal draw
  std::uint64_t steps_per_epoch = 1;

  // Checkpoint to continue from; empty for a fresh run.
  std::filesystem::path resume;

  // Throws ConfigError on any invalid field or unknown key.
  static RunConfig from_key_values(const KeyValues& kv);
  static RunConfig load(const std::filesystem::path& path);

  void validate() const;
  // Canonical `key = value` listing of every field, in a fixed order.
  std::vector<std::pair<std::string, std::string>> echo() const;
  // SHA-256 over the fields that define a training trajectory: everything
  // except epochs, output_dir, resume and the convergence settings.
  std::array<std::uint8_t, 32> identity_hash() const;
};

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace cegm::harness
