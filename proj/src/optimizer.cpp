#include "cegm/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "cegm/error.hpp"
#include "cegm/kernels.hpp"

namespace cegm {

std::string_view norm_mode_name(NormMode m) noexcept {
  return m == NormMode::kUnit ? "unit" : "preserve";
}

NormMode parse_norm_mode(std::string_view s) {
  if (s == "unit") return NormMode::kUnit;
  if (s == "preserve") return NormMode::kPreserve;
  throw ConfigError("norm_mode must be 'unit' or 'preserve', got '" + std::string(s) + "'");
}

void CEGMConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (!(eta > 0.0) || !std::isfinite(eta)) fail("eta must be a positive finite number");
  if (!(lambda_min > 0.0)) fail("lambda_min must be > 0");
  if (!(lambda_min < lambda_max)) fail("lambda_min must be < lambda_max");
  if (!(lambda_max <= 1.0)) fail("lambda_max must be <= 1");
  if (!(lambda0 >= lambda_min && lambda0 <= lambda_max)) fail("lambda0 must lie in [lambda_min, lambda_max]");
  if (!(delta_lambda >= 0.0) || !std::isfinite(delta_lambda)) fail("delta_lambda must be >= 0");
  if (!(mu >= 0.0 && mu <= 1.0)) fail("mu must lie in [0, 1]");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) fail("epsilon must be > 0");
}

EntangledState EntangledState::init(const ParamSet& params, const CEGMConfig& cfg) {
  EntangledState s;
  s.ema = params.zeros_like();
  s.lambda = cfg.lambda0;
  return s;
}

bool StepRecord::degenerate() const noexcept {
  return std::any_of(tensors.begin(), tensors.end(), [](const auto& t) { return t.degenerate; });
}

double StepRecord::grad_norm() const noexcept {
  double s = 0.0;
  for (const auto& t : tensors) s += t.grad_norm * t.grad_norm;
  return std::sqrt(s);
}

double StepRecord::update_norm() const noexcept {
  double s = 0.0;
  for (const auto& t : tensors) s += t.update_norm * t.update_norm;
  return std::sqrt(s);
}

void check_grads(const ParamSet& params, const GradMap& grads) {
  if (grads.size() != params.size())
    throw ShapeError("expected " + std::to_string(params.size()) + " gradient tensors, got " +
                     std::to_string(grads.size()));
  for (const auto& p : params) {
    if (!grads.contains(p.name)) throw ShapeError("missing gradient for '" + p.name + "'");
    const Tensor& g = grads.at(p.name);
    if (!g.same_shape(p.value))
      throw ShapeError("gradient for '" + p.name + "' has shape " + shape_to_string(g.shape()) +
                       ", parameter has " + shape_to_string(p.value.shape()));
    if (!g.all_finite()) throw NumericError("gradient for '" + p.name + "' is not finite");
  }
}

EntangledState ema_update(EntangledState state, const GradMap& grads) {
  const double lam = state.lambda;
  for (auto& [name, ema] : state.ema) {
    if (!grads.contains(name)) throw ShapeError("no gradient for EMA tensor '" + name + "'");
    const Tensor& g = grads.at(name);
    if (!g.same_shape(ema))
      throw ShapeError("gradient for '" + name + "' has shape " + shape_to_string(g.shape()) +
                       ", EMA has " + shape_to_string(ema.shape()));
  }
  for (auto& [name, ema] : state.ema) {
    const Tensor& g = grads.at(name);
    Tensor next(g.shape());
    kernels::scale(lam, g.data(), next.data());
    kernels::axpy(1.0 - lam, ema.data(), next.data());
    ema = std::move(next);
  }
  return state;
}

Tensor entangle(const Tensor& ema, std::span<const double> summary, double mu, Role role) {
  if (role == Role::kGeneric) return ema;
  if (ema.last_extent() != summary.size())
    throw ShapeError("entangle: tensor trailing extent " + std::to_string(ema.last_extent()) +
                     " != context dimension " + std::to_string(summary.size()));
  const double norm = std::sqrt(kernels::sum_squares(summary));
  if (!(norm > 0.0)) return ema;
  std::vector<double> dir(summary.size());
  kernels::scale(1.0 / norm, summary, dir);
  Tensor out(ema.shape());
  for (std::size_t r = 0; r < ema.leading_rows(); ++r) {
    const auto g = ema.row(r);
    auto e = out.row(r);
    kernels::scale(1.0 - mu, g, e);
    kernels::axpy(mu * kernels::dot(g, dir), dir, e);
  }
  return out;
}

NormalizedUpdate normalize_update(const Tensor& entangled, const Tensor& raw_grad, NormMode mode,
                                  double epsilon) {
  if (!entangled.same_shape(raw_grad))
    throw ShapeError("normalize_update: entangled " + shape_to_string(entangled.shape()) +
                     " vs gradient " + shape_to_string(raw_grad.shape()));
  const double norm = entangled.frobenius_norm();
  NormalizedUpdate out{Tensor(entangled.shape()), false};
  if (mode == NormMode::kUnit) {
    if (norm < epsilon) {
      out.degenerate = true;
      return out;
    }
    kernels::scale(1.0 / norm, entangled.data(), out.update.data());
    return out;
  }
  if (norm < epsilon) return out;
  kernels::scale(raw_grad.frobenius_norm() / norm, entangled.data(), out.update.data());
  return out;
}

EntangledState adjust_lambda(EntangledState state, double loss, const CEGMConfig& cfg) {
  if (!std::isfinite(loss)) throw NumericError("adjust_lambda: loss is not finite");
  double g = 0.0;
  if (state.prev_loss) {
    const double prev = *state.prev_loss;
    g = std::clamp((prev - loss) / std::max(std::abs(prev), 1e-8), -1.0, 1.0);
  }
  state.lambda = std::clamp(state.lambda + cfg.delta_lambda * g, cfg.lambda_min, cfg.lambda_max);
  state.prev_loss = loss;
  return state;
}

StepRecord cegm_step(ParamSet& params, const GradMap& grads, const ContextBatch& batch,
                     EntangledState& state, const CEGMConfig& cfg, double loss) {
  check_grads(params, grads);
  params.check_embedding_dim(batch.dim());
  if (!std::isfinite(loss)) throw NumericError("cegm_step: loss is not finite");

  StepRecord rec;
  rec.loss = loss;
  rec.lambda_used = state.lambda;

  EntangledState next = ema_update(state, grads);
  const ContextSummary ctx = aggregate(batch);

  std::vector<Tensor> new_values;
  new_values.reserve(params.size());
  for (const auto& p : params) {
    const Tensor& g = grads.at(p.name);
    const Tensor e = entangle(next.ema.at(p.name), ctx.summary, cfg.mu, p.role);
    NormalizedUpdate u = normalize_update(e, g, cfg.norm_mode, cfg.epsilon);
    Tensor theta = p.value;
    kernels::axpy(-cfg.eta, u.update.data(), theta.data());
    if (!theta.all_finite()) throw NumericError("cegm_step: update of '" + p.name + "' is not finite");
    rec.tensors.push_back({p.name, g.frobenius_norm(), u.update.frobenius_norm(), u.degenerate});
    new_values.push_back(std::move(theta));
  }
  next = adjust_lambda(std::move(next), loss, cfg);
  next.step = state.step + 1;

  // Commit.
  std::size_t i = 0;
  for (auto& p : params) p.value = std::move(new_values[i++]);
  state = std::move(next);
  rec.step = state.step;
  rec.lambda_next = state.lambda;
  return rec;
}

void sgd_step(ParamSet& params, const GradMap& grads, double eta) {
  check_grads(params, grads);
  for (auto& p : params) kernels::axpy(-eta, grads.at(p.name).data(), p.value.data());
}

void normgd_step(ParamSet& params, const GradMap& grads, double eta, double epsilon) {
  check_grads(params, grads);
  for (auto& p : params) {
    const Tensor& g = grads.at(p.name);
    const double norm = g.frobenius_norm();
    if (norm < epsilon) continue;
    Tensor u(g.shape());
    kernels::scale(1.0 / norm, g.data(), u.data());
    kernels::axpy(-eta, u.data(), p.value.data());
  }
}

AdamState AdamState::init(const ParamSet& params) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void adam_step(ParamSet& params, const GradMap& grads, AdamState& state, const AdamConfig& cfg) {
  check_grads(params, grads);
  for (const auto& p : params)
    if (!state.m.contains(p.name) || !state.m.at(p.name).same_shape(p.value))
      throw ShapeError("adam state does not match parameter '" + p.name + "'");
  const std::uint64_t t = state.t + 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& p : params) {
    const Tensor& g = grads.at(p.name);
    Tensor& m = state.m.at(p.name);
    Tensor& v = state.v.at(p.name);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= cfg.eta * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
  state.t = t;
}

std::string_view optimizer_name(OptimizerKind k) noexcept {
  switch (k) {
    case OptimizerKind::kCegm: return "cegm";
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kAdam: return "adam";
    case OptimizerKind::kNormGd: return "normgd";
  }
  return "?";
}

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "cegm") return OptimizerKind::kCegm;
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "normgd") return OptimizerKind::kNormGd;
  throw ConfigError("optimizer must be one of cegm, sgd, adam, normgd; got '" + std::string(s) + "'");
}

Optimizer::Optimizer(OptimizerKind kind, const CEGMConfig& cfg, const ParamSet& params)
    : kind_(kind), cfg_(cfg) {
  cfg_.validate();
  if (kind_ == OptimizerKind::kCegm) cegm_ = EntangledState::init(params, cfg_);
  if (kind_ == OptimizerKind::kAdam) adam_ = AdamState::init(params);
}

double Optimizer::lambda() const noexcept {
  return kind_ == OptimizerKind::kCegm ? cegm_.lambda : cfg_.lambda0;
}

StepRecord Optimizer::step(ParamSet& params, const GradMap& grads, const ContextBatch& batch,
                           double loss) {
  if (kind_ == OptimizerKind::kCegm) return cegm_step(params, grads, batch, cegm_, cfg_, loss);
  if (!std::isfinite(loss)) throw NumericError("optimizer step: loss is not finite");

  const ParamSet before = params;
  switch (kind_) {
    case OptimizerKind::kSgd: sgd_step(params, grads, cfg_.eta); break;
    case OptimizerKind::kNormGd: normgd_step(params, grads, cfg_.eta, cfg_.epsilon); break;
    case OptimizerKind::kAdam:
      adam_step(params, grads, adam_, AdamConfig{.eta = cfg_.eta});
      break;
    case OptimizerKind::kCegm: break;
  }
  StepRecord rec;
  rec.loss = loss;
  rec.lambda_used = rec.lambda_next = cfg_.lambda0;
  rec.step = kind_ == OptimizerKind::kAdam ? adam_.t : ++plain_steps_;
  for (const auto& p : params) {
    const Tensor& old = before.value(p.name);
    Tensor diff(old.shape());
    kernels::active().sub(old.data().data(), p.value.data().data(), diff.data().data(), diff.numel());
    rec.tensors.push_back({p.name, grads.at(p.name).frobenius_norm(),
                           diff.frobenius_norm() / cfg_.eta, false});
  }
  return rec;
}

OptimizerSnapshot Optimizer::snapshot() const {
  OptimizerSnapshot s;
  s.kind = kind_;
  switch (kind_) {
    case OptimizerKind::kCegm:
      s.lambda = cegm_.lambda;
      s.prev_loss = cegm_.prev_loss;
      s.step = cegm_.step;
      s.slots.emplace_back("ema", cegm_.ema);
      break;
    case OptimizerKind::kAdam:
      s.lambda = cfg_.lambda0;
      s.step = adam_.t;
      s.slots.emplace_back("m", adam_.m);
      s.slots.emplace_back("v", adam_.v);
      break;
    default:
      s.lambda = cfg_.lambda0;
      s.step = plain_steps_;
      break;
  }
  return s;
}

void Optimizer::restore(const OptimizerSnapshot& snap, const ParamSet& params) {
  if (snap.kind != kind_)
    throw FormatError("checkpoint holds " + std::string(optimizer_name(snap.kind)) +
                      " state, run uses " + std::string(optimizer_name(kind_)));
  auto check_slot = [&](std::size_t i, std::string_view name) -> const NamedTensors& {
    if (snap.slots.size() <= i || snap.slots[i].first != name)
      throw FormatError("checkpoint optimizer state lacks slot '" + std::string(name) + "'");
    const NamedTensors& t = snap.slots[i].second;
    for (const auto& p : params)
      if (!t.contains(p.name) || !t.at(p.name).same_shape(p.value))
        throw FormatError("checkpoint slot '" + std::string(name) + "' does not match parameter '" +
                          p.name + "'");
    return t;
  };
  switch (kind_) {
    case OptimizerKind::kCegm:
      cegm_.ema = check_slot(0, "ema");
      cegm_.lambda = snap.lambda;
      cegm_.prev_loss = snap.prev_loss;
      cegm_.step = snap.step;
      break;
    case OptimizerKind::kAdam:
      adam_.m = check_slot(0, "m");
      adam_.v = check_slot(1, "v");
      adam_.t = snap.step;
      break;
    default:
      plain_steps_ = snap.step;
      break;
  }
}

std::size_t Optimizer::state_bytes() const noexcept {
  auto bytes = [](const NamedTensors& t) {
    std::size_t n = 0;
    for (const auto& [_, v] : t) n += v.numel() * sizeof(double);
    return n;
  };
  switch (kind_) {
    case OptimizerKind::kCegm: return bytes(cegm_.ema);
    case OptimizerKind::kAdam: return bytes(adam_.m) + bytes(adam_.v);
    default: return 0;
  }
}

}  // namespace cegm
