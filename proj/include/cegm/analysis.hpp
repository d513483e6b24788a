#pragma once

// Entanglement scalar, regularized loss, and the linear gradient-dynamics ODE
//   dG/dt = gamma * C^T G - delta * G
// with C a symmetric PSD d x d context matrix and G a d x k matrix.

#include <cstddef>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "cegm/context.hpp"
#include "cegm/tensor.hpp"

namespace cegm {

enum class KernelKind { kCosine, kInnerProduct };

KernelKind parse_kernel_kind(std::string_view s);
std::string_view kernel_kind_name(KernelKind k) noexcept;

// kappa(c, g). Cosine scores 0 when either vector has norm < 1e-12.
double alignment_kernel(std::span<const double> c, std::span<const double> g, KernelKind kind);

// lambda * mean_i kappa(c_i, g_i). Rows are paired by index.
double entanglement_scalar(const ContextBatch& batch, const Tensor& grad_rows, double lambda,
                           KernelKind kind = KernelKind::kCosine);

// task_loss + beta * e_scalar. Reported only; never differentiated.
inline double regularized_loss(double task_loss, double e_scalar, double beta) {
  return task_loss + beta * e_scalar;
}

// (1/n) sum_i c_i c_i^T.
Tensor context_gram(const ContextBatch& batch);

// ---- ODE -------------------------------------------------------------------

enum class OdeMethod { kEuler, kRk4 };

OdeMethod parse_ode_method(std::string_view s);

enum class Stability { kStable, kMarginal, kUnstable };

std::string_view stability_name(Stability s) noexcept;

class OdeConfig {
 public:
  // Throws ConfigError if C is not square, not symmetric within 1e-10, has an
  // eigenvalue below -1e-10, or if g0/gamma/delta/t_end/dt are invalid.
  OdeConfig(double gamma, double delta, Tensor c_matrix, Tensor g0, double t_end, double dt);

  double gamma() const noexcept { return gamma_; }
  double delta() const noexcept { return delta_; }
  const Tensor& c_matrix() const noexcept { return c_; }
  const Tensor& g0() const noexcept { return g0_; }
  double t_end() const noexcept { return t_end_; }
  double dt() const noexcept { return dt_; }
  std::size_t dim() const noexcept { return c_.shape()[0]; }
  std::size_t cols() const noexcept { return g0_.shape()[1]; }

  // Eigenvalues of C in ascending order, and the matching orthonormal
  // eigenvectors as columns of a d x d matrix.
  const std::vector<double>& eigenvalues() const noexcept { return eigenvalues_; }
  const Tensor& eigenvectors() const noexcept { return eigenvectors_; }
  double lambda_max() const noexcept { return eigenvalues_.back(); }
  // gamma * lambda_max(C) - delta: the slowest-decaying growth exponent.
  double growth_margin() const noexcept { return gamma_ * lambda_max() - delta_; }

 private:
  double gamma_, delta_;
  Tensor c_, g0_;
  double t_end_, dt_;
  std::vector<double> eigenvalues_;
  Tensor eigenvectors_;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<Tensor> g;  // d x k per time point
};

// Right-hand side gamma * C^T G - delta * G.
Tensor ode_rhs(const OdeConfig& cfg, const Tensor& g);

// Integrates from t=0 to t_end. The final step is shortened if dt does not
// divide t_end; the trajectory always contains t=0 and t=t_end.
Trajectory ode_integrate(const OdeConfig& cfg, OdeMethod method);

// Q diag(exp((gamma*lambda_i - delta) t)) Q^T g0.
Tensor ode_closed_form(const OdeConfig& cfg, double t);

Stability stability_classify(const OdeConfig& cfg);

// CSV: header "t,g_0_0,g_0_1,...", one row per time point, row-major entries.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

}  // namespace cegm
