#pragma once

// CEGM update rule and the conventional baselines it is compared against.
//
// One CEGM step, per parameter tensor:
//   ema   <- lambda * grad + (1 - lambda) * ema          (lambda read first)
//   c     <- softmax-weighted context summary, c_hat = c / |c|
//   e_i   <- (1 - mu) * g_i + mu * <g_i, c_hat> c_hat    (embedding-aligned rows)
//   u     <- e / |e|_F  (unit)   or   e * |grad|_F / |e|_F  (preserve)
//   theta <- theta - eta * u
// then lambda <- clamp(lambda + delta_lambda * g(L), lambda_min, lambda_max)
// with g(L) the clipped relative loss improvement over the previous step.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cegm/context.hpp"
#include "cegm/params.hpp"
#include "cegm/tensor.hpp"

namespace cegm {

enum class NormMode { kUnit, kPreserve };

std::string_view norm_mode_name(NormMode m) noexcept;
// Throws ConfigError on unknown names.
NormMode parse_norm_mode(std::string_view s);

struct CEGMConfig {
  double eta = 0.01;
  double lambda0 = 0.5;
  double lambda_min = 0.05;
  double lambda_max = 0.95;
  double delta_lambda = 0.01;
  double mu = 0.5;
  NormMode norm_mode = NormMode::kUnit;
  double epsilon = 1e-12;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct EntangledState {
  NamedTensors ema;
  double lambda = 0.5;
  std::optional<double> prev_loss;
  std::uint64_t step = 0;

  static EntangledState init(const ParamSet& params, const CEGMConfig& cfg);

  bool operator==(const EntangledState&) const = default;
};

struct TensorStepInfo {
  std::string name;
  double grad_norm = 0.0;
  double update_norm = 0.0;
  bool degenerate = false;
};

struct StepRecord {
  std::uint64_t step = 0;  // 1-based index of the completed step
  double loss = 0.0;
  double lambda_used = 0.0;  // lambda mixed into the EMA this step
  double lambda_next = 0.0;  // lambda after adjustment
  std::vector<TensorStepInfo> tensors;

  bool degenerate() const noexcept;
  double grad_norm() const noexcept;    // global Frobenius norm of raw gradients
  double update_norm() const noexcept;  // global Frobenius norm of applied updates
};

// ema <- lambda * grad + (1 - lambda) * ema, using state.lambda.
EntangledState ema_update(EntangledState state, const GradMap& grads);

// Projection blend of each trailing row toward the context direction.
// Generic tensors and a zero summary pass through unchanged.
Tensor entangle(const Tensor& ema, std::span<const double> summary, double mu, Role role);

struct NormalizedUpdate {
  Tensor update;
  bool degenerate = false;
};

NormalizedUpdate normalize_update(const Tensor& entangled, const Tensor& raw_grad, NormMode mode,
                                  double epsilon);

// Loss-improvement governor. Throws NumericError on non-finite loss.
EntangledState adjust_lambda(EntangledState state, double loss, const CEGMConfig& cfg);

// Full step. On any error neither params nor state are modified.
StepRecord cegm_step(ParamSet& params, const GradMap& grads, const ContextBatch& batch,
                     EntangledState& state, const CEGMConfig& cfg, double loss);

// ---- Baselines -------------------------------------------------------------

void sgd_step(ParamSet& params, const GradMap& grads, double eta);

// Per-tensor normalized gradient descent: theta -= eta * g / max(|g|_F, epsilon).
void normgd_step(ParamSet& params, const GradMap& grads, double eta, double epsilon = 1e-12);

struct AdamConfig {
  double eta = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  NamedTensors m;
  NamedTensors v;
  std::uint64_t t = 0;

  static AdamState init(const ParamSet& params);
  bool operator==(const AdamState&) const = default;
};

void adam_step(ParamSet& params, const GradMap& grads, AdamState& state, const AdamConfig& cfg);

// Throws ShapeError unless grads has exactly one tensor per parameter with
// matching shape.
void check_grads(const ParamSet& params, const GradMap& grads);

// ---- Uniform driver for the harness ----------------------------------------

enum class OptimizerKind { kCegm, kSgd, kAdam, kNormGd };

std::string_view optimizer_name(OptimizerKind k) noexcept;
OptimizerKind parse_optimizer(std::string_view s);

// Serializable optimizer state: scalar fields plus named tensor slots
// (cegm: "ema"; adam: "m", "v"; sgd and normgd: none).
struct OptimizerSnapshot {
  OptimizerKind kind = OptimizerKind::kSgd;
  double lambda = 0.0;
  std::optional<double> prev_loss;
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, NamedTensors>> slots;

  bool operator==(const OptimizerSnapshot&) const = default;
};

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, const CEGMConfig& cfg, const ParamSet& params);

  OptimizerKind kind() const noexcept { return kind_; }
  // Current lambda for cegm; the configured lambda0 otherwise.
  double lambda() const noexcept;

  StepRecord step(ParamSet& params, const GradMap& grads, const ContextBatch& batch, double loss);

  OptimizerSnapshot snapshot() const;
  // Throws FormatError if the snapshot does not fit this optimizer/params.
  void restore(const OptimizerSnapshot& snap, const ParamSet& params);

  std::size_t state_bytes() const noexcept;

 private:
  OptimizerKind kind_;
  CEGMConfig cfg_;
  EntangledState cegm_;
  AdamState adam_;
  std::uint64_t plain_steps_ = 0;
};

}  // namespace cegm
