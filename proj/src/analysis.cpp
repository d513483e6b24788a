#include "cegm/analysis.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "cegm/error.hpp"
#include "cegm/kernels.hpp"

namespace cegm {

KernelKind parse_kernel_kind(std::string_view s) {
  if (s == "cosine") return KernelKind::kCosine;
  if (s == "inner-product" || s == "inner") return KernelKind::kInnerProduct;
  throw ConfigError("kernel must be 'cosine' or 'inner-product', got '" + std::string(s) + "'");
}

std::string_view kernel_kind_name(KernelKind k) noexcept {
  return k == KernelKind::kCosine ? "cosine" : "inner-product";
}

double alignment_kernel(std::span<const double> c, std::span<const double> g, KernelKind kind) {
  const double ip = kernels::dot(c, g);
  if (kind == KernelKind::kInnerProduct) return ip;
  const double nc = std::sqrt(kernels::sum_squares(c));
  const double ng = std::sqrt(kernels::sum_squares(g));
  if (nc < 1e-12 || ng < 1e-12) return 0.0;
  return std::clamp(ip / (nc * ng), -1.0, 1.0);
}

double entanglement_scalar(const ContextBatch& batch, const Tensor& grad_rows, double lambda,
                           KernelKind kind) {
  if (grad_rows.rank() != 2 || grad_rows.shape()[0] != batch.size() ||
      grad_rows.shape()[1] != batch.dim())
    throw ShapeError("entanglement_scalar: gradient rows " + shape_to_string(grad_rows.shape()) +
                     " do not pair with context [" + std::to_string(batch.size()) + "," +
                     std::to_string(batch.dim()) + "]");
  double s = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) s += alignment_kernel(batch.row(i), grad_rows.row(i), kind);
  return lambda * s / static_cast<double>(batch.size());
}

Tensor context_gram(const ContextBatch& batch) {
  const std::size_t d = batch.dim();
  Tensor out(Shape{d, d});
  kernels::active().gemm_tn(batch.size(), d, d, batch.rows().data().data(),
                            batch.rows().data().data(), out.data().data(), false);
  kernels::scale(1.0 / static_cast<double>(batch.size()), out.data(), out.data());
  return out;
}

OdeMethod parse_ode_method(std::string_view s) {
  if (s == "euler") return OdeMethod::kEuler;
  if (s == "rk4") return OdeMethod::kRk4;
  throw ConfigError("method must be 'euler' or 'rk4', got '" + std::string(s) + "'");
}

std::string_view stability_name(Stability s) noexcept {
  switch (s) {
    case Stability::kStable: return "stable";
    case Stability::kMarginal: return "marginal";
    case Stability::kUnstable: return "unstable";
  }
  return "?";
}

OdeConfig::OdeConfig(double gamma, double delta, Tensor c_matrix, Tensor g0, double t_end, double dt)
    : gamma_(gamma), delta_(delta), c_(std::move(c_matrix)), g0_(std::move(g0)), t_end_(t_end), dt_(dt) {
  if (!(gamma_ >= 0.0) || !std::isfinite(gamma_)) throw ConfigError("gamma must be >= 0");
  if (!(delta_ >= 0.0) || !std::isfinite(delta_)) throw ConfigError("delta must be >= 0");
  if (!(t_end_ > 0.0) || !std::isfinite(t_end_)) throw ConfigError("t_end must be > 0");
  if (!(dt_ > 0.0) || !(dt_ <= t_end_)) throw ConfigError("dt must satisfy 0 < dt <= t_end");
  if (c_.rank() != 2 || c_.shape()[0] != c_.shape()[1])
    throw ConfigError("c_matrix must be square, got " + shape_to_string(c_.shape()));
  if (!c_.all_finite()) throw ConfigError("c_matrix has non-finite entries");
  const std::size_t d = c_.shape()[0];
  if (g0_.rank() == 1) g0_ = Tensor(Shape{g0_.numel(), 1}, g0_.values());
  if (g0_.rank() != 2 || g0_.shape()[0] != d)
    throw ConfigError("g0 must be " + std::to_string(d) + " x k, got " + shape_to_string(g0_.shape()));
  if (!g0_.all_finite()) throw ConfigError("g0 has non-finite entries");
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j)
      if (std::abs(c_.at(i, j) - c_.at(j, i)) > 1e-10)
        throw ConfigError("c_matrix is not symmetric at (" + std::to_string(i) + "," +
                          std::to_string(j) + ")");

  Eigen::MatrixXd m(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = 0.5 * (c_.at(i, j) + c_.at(j, i));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw ConfigError("eigendecomposition of c_matrix failed");
  eigenvalues_.resize(d);
  eigenvectors_ = Tensor(Shape{d, d});
  for (std::size_t i = 0; i < d; ++i) {
    eigenvalues_[i] = es.eigenvalues()(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < d; ++j)
      eigenvectors_.at(i, j) = es.eigenvectors()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  if (eigenvalues_.front() < -1e-10)
    throw ConfigError("c_matrix is not positive semidefinite (eigenvalue " +
                      std::to_string(eigenvalues_.front()) + ")");
}

Tensor ode_rhs(const OdeConfig& cfg, const Tensor& g) {
  const std::size_t d = cfg.dim();
  const std::size_t k = cfg.cols();
  Tensor out(g.shape());
  // C^T G, C stored [d,d]: gemm_tn with A = C.
  kernels::active().gemm_tn(d, d, k, cfg.c_matrix().data().data(), g.data().data(), out.data().data(),
                            false);
  kernels::scale(cfg.gamma(), out.data(), out.data());
  kernels::axpy(-cfg.delta(), g.data(), out.data());
  return out;
}

namespace {

Tensor euler_step(const OdeConfig& cfg, const Tensor& g, double h) {
  Tensor next = g;
  kernels::axpy(h, ode_rhs(cfg, g).data(), next.data());
  return next;
}

Tensor rk4_step(const OdeConfig& cfg, const Tensor& g, double h) {
  auto shifted = [&](const Tensor& k, double f) {
    Tensor t = g;
    kernels::axpy(f, k.data(), t.data());
    return t;
  };
  const Tensor k1 = ode_rhs(cfg, g);
  const Tensor k2 = ode_rhs(cfg, shifted(k1, 0.5 * h));
  const Tensor k3 = ode_rhs(cfg, shifted(k2, 0.5 * h));
  const Tensor k4 = ode_rhs(cfg, shifted(k3, h));
  Tensor next = g;
  kernels::axpy(h / 6.0, k1.data(), next.data());
  kernels::axpy(h / 3.0, k2.data(), next.data());
  kernels::axpy(h / 3.0, k3.data(), next.data());
  kernels::axpy(h / 6.0, k4.data(), next.data());
  return next;
}

}  // namespace

Trajectory ode_integrate(const OdeConfig& cfg, OdeMethod method) {
  // Steps of dt; the last one lands exactly on t_end.
  const auto steps = static_cast<std::size_t>(std::ceil(cfg.t_end() / cfg.dt() - 1e-9));
  Trajectory traj;
  traj.t.reserve(steps + 1);
  traj.g.reserve(steps + 1);
  traj.t.push_back(0.0);
  traj.g.push_back(cfg.g0());
  Tensor g = cfg.g0();
  for (std::size_t i = 1; i <= steps; ++i) {
    const double t_next = i == steps ? cfg.t_end() : static_cast<double>(i) * cfg.dt();
    const double h = t_next - traj.t.back();
    g = method == OdeMethod::kEuler ? euler_step(cfg, g, h) : rk4_step(cfg, g, h);
    traj.t.push_back(t_next);
    traj.g.push_back(g);
  }
  return traj;
}

Tensor ode_closed_form(const OdeConfig& cfg, double t) {
  if (t == 0.0) return cfg.g0();
  const std::size_t d = cfg.dim();
  const std::size_t k = cfg.cols();
  const Tensor& q = cfg.eigenvectors();
  // y = Q^T g0, scaled per eigen-row, then Q y.
  Tensor y(Shape{d, k});
  kernels::active().gemm_tn(d, d, k, q.data().data(), cfg.g0().data().data(), y.data().data(), false);
  for (std::size_t i = 0; i < d; ++i) {
    const double f = std::exp((cfg.gamma() * cfg.eigenvalues()[i] - cfg.delta()) * t);
    kernels::scale(f, y.row(i), y.row(i));
  }
  Tensor out(Shape{d, k});
  kernels::active().gemm_nn(d, d, k, q.data().data(), y.data().data(), out.data().data(), false);
  return out;
}

Stability stability_classify(const OdeConfig& cfg) {
  const double m = cfg.growth_margin();
  if (m < -1e-10) return Stability::kStable;
  if (std::abs(m) <= 1e-10) return Stability::kMarginal;
  return Stability::kUnstable;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  if (traj.g.empty()) return;
  const Tensor& first = traj.g.front();
  const std::size_t rows = first.shape()[0];
  const std::size_t cols = first.shape()[1];
  os << 't';
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) os << ",g_" << i << '_' << j;
  os << '\n';
  char buf[40];
  for (std::size_t s = 0; s < traj.t.size(); ++s) {
    std::snprintf(buf, sizeof buf, "%.17g", traj.t[s]);
    os << buf;
    for (double v : traj.g[s].data()) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
}

}  // namespace cegm
