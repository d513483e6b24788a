#include "cegm/harness/simulate.hpp"

#include <cmath>
#include <fstream>

#include "cegm/error.hpp"

namespace cegm::harness {

OdeRun ode_run_from(const KeyValues& kv) {
  static const std::vector<std::string_view> known{"gamma", "delta", "c_matrix", "g0", "k",
                                                   "t_end", "dt",    "method",   "output"};
  if (const auto unknown = kv.unknown_keys(known); !unknown.empty())
    throw ConfigError("unknown ode config key '" + unknown.front() + "'");
  const auto c = kv.numbers("c_matrix");
  const auto d = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(c.size()))));
  if (d == 0 || d * d != c.size())
    throw ConfigError("c_matrix must hold d*d values, got " + std::to_string(c.size()));
  const auto g0 = kv.numbers("g0");
  const std::size_t k = kv.integer("k", 1);
  if (k == 0 || g0.size() != d * k)
    throw ConfigError("g0 must hold " + std::to_string(d) + "*k values, got " + std::to_string(g0.size()));
  OdeConfig cfg(kv.number("gamma"), kv.number("delta"), Tensor(Shape{d, d}, c), Tensor(Shape{d, k}, g0),
                kv.number("t_end"), kv.number("dt"));
  std::filesystem::path out = kv.has("output") ? kv.path("output") : kv.base_dir() / "trajectory.csv";
  return OdeRun{std::move(cfg), parse_ode_method(kv.str("method", "rk4")), std::move(out)};
}

OdeOutcome simulate_ode(const OdeRun& run) {
  const Trajectory traj = ode_integrate(run.config, run.method);
  std::ofstream out(run.output, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + run.output.string());
  write_trajectory_csv(out, traj);
  const Tensor exact = ode_closed_form(run.config, run.config.t_end());
  double err = 0.0;
  for (std::size_t i = 0; i < exact.numel(); ++i) err = std::max(err, std::abs(exact[i] - traj.g.back()[i]));
  return OdeOutcome{stability_classify(run.config), run.config.growth_margin(), err, run.output};
}

}  // namespace cegm::harness
