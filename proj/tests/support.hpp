#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "cegm/autodiff.hpp"
#include "cegm/params.hpp"
#include "cegm/rng.hpp"
#include "cegm/tensor.hpp"

namespace cegm::test {

inline Tensor random_tensor(const Shape& shape, SplitMix64& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Same, but every entry at least `gap` away from zero (keeps relu off its kink).
inline Tensor random_tensor_off_zero(const Shape& shape, SplitMix64& rng, double gap = 1e-3) {
  Tensor t(shape);
  for (auto& v : t.data()) {
    do v = rng.uniform(-2.0, 2.0);
    while (std::abs(v) < gap);
  }
  return t;
}

// Entrywise error used by the gradient checks: 0 when the absolute gap is
// below `abs_floor`, otherwise relative to the larger magnitude.
inline double grad_error(double analytic, double numeric, double abs_floor = 1e-8) {
  const double gap = std::abs(analytic - numeric);
  if (gap <= abs_floor) return 0.0;
  return gap / std::max(std::abs(analytic), std::abs(numeric));
}

using LossFn = std::function<double(const ParamSet&)>;

// Max grad_error of `grads` against central differences of `loss`.
inline double max_fd_error(const LossFn& loss, ParamSet params, const GradMap& grads, double h = 1e-5,
                           double* worst_abs = nullptr) {
  double worst = 0.0;
  for (auto& e : params) {
    const Tensor& g = grads.at(e.name);
    for (std::size_t i = 0; i < e.value.numel(); ++i) {
      const double keep = e.value[i];
      e.value[i] = keep + h;
      const double up = loss(params);
      e.value[i] = keep - h;
      const double down = loss(params);
      e.value[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, grad_error(g[i], numeric));
      if (worst_abs) *worst_abs = std::max(*worst_abs, std::abs(g[i] - numeric));
    }
  }
  return worst;
}

// Builds a graph with `build`, which returns the scalar loss node, then
// compares backward() with finite differences of the same construction.
inline double fd_check_graph(const std::function<NodeId(Graph&, const ParamSet&)>& build, const ParamSet& params,
                             double* worst_abs = nullptr) {
  Graph g;
  const NodeId loss = build(g, params);
  const GradMap grads = g.backward(loss, params);
  const LossFn f = [&](const ParamSet& p) {
    Graph gg;
    return gg.value(build(gg, p)).item();
  };
  return max_fd_error(f, params, grads, 1e-5, worst_abs);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace cegm::test
