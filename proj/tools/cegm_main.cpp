// Command-line front end: train, sweep, simulate-ode, compare, plot.
//
// Exit codes: 0 success, 1 configuration/input error, 2 runtime or numeric error.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "cegm/error.hpp"
#include "cegm/harness/compare.hpp"
#include "cegm/harness/config.hpp"
#include "cegm/harness/plot.hpp"
#include "cegm/harness/runner.hpp"
#include "cegm/harness/simulate.hpp"
#include "cegm/kernels.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigExit = 1;
constexpr int kRuntimeExit = 2;

using namespace cegm::harness;

int cmd_train(const std::string& config) {
  const RunConfig cfg = RunConfig::load(config);
  const RunReport rep = run_experiment(cfg);
  std::cout << "wrote " << cfg.output_dir.string() << " (" << rep.steps.size() << " steps, " << rep.epochs.size()
            << " epochs)\n";
  if (!rep.epochs.empty()) {
    const auto& last = rep.epochs.back();
    std::cout << "final train_loss=" << format_double(last.train_loss) << " eval_loss=" << format_double(last.eval_loss)
              << " eval_accuracy=" << format_double(last.eval_accuracy)
              << " perplexity=" << format_double(last.perplexity) << '\n';
  }
  std::cout << "convergence_epochs="
            << (rep.summary.convergence_epochs ? std::to_string(*rep.summary.convergence_epochs) : "not-reached")
            << '\n';
  return kOk;
}

int cmd_sweep(const std::string& config, const std::string& seeds, unsigned jobs) {
  const KeyValues kv = KeyValues::load(config);
  const RunConfig base = RunConfig::from_key_values(kv);
  const SweepGrid grid = sweep_grid_from(kv, parse_u64_list(seeds));
  const auto path = run_sweep(base, grid, jobs);
  std::cout << "wrote " << path.string() << '\n';
  return kOk;
}

int cmd_simulate(const std::string& config) {
  const OdeRun run = ode_run_from(KeyValues::load(config));
  const OdeOutcome o = simulate_ode(run);
  std::cout << "verdict = " << cegm::stability_name(o.verdict) << '\n'
            << "growth_margin = " << format_double(o.margin) << '\n'
            << "closed_form_max_abs_error = " << format_double(o.endpoint_error) << '\n'
            << "trajectory = " << o.output.string() << '\n';
  return kOk;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<RunRecord> runs;
  for (const auto& d : dirs) {
    auto more = load_runs(d);
    runs.insert(runs.end(), more.begin(), more.end());
  }
  const auto rows = compare_runs(runs);
  std::ofstream os(out, std::ios::binary | std::ios::trunc);
  if (!os) throw cegm::Error("cannot write " + out);
  write_comparison_csv(os, rows);
  std::cout << "wrote " << out << " (" << rows.size() << " rows from " << runs.size() << " runs)\n";
  return kOk;
}

int cmd_plot(const std::string& csv, const std::string& out) {
  const std::filesystem::path dir = out.empty() ? std::filesystem::path(csv).parent_path() : std::filesystem::path(out);
  const PlotResult r = emit_plots(csv, dir.empty() ? std::filesystem::path(".") : dir);
  if (!r.warning.empty()) std::cerr << "warning: " << r.warning << '\n';
  for (const auto& f : r.files) std::cout << "wrote " << f.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-entangled gradient optimizer lab"};
  app.require_subcommand(1);
  std::string simd = "auto";
  app.add_option("--simd", simd, "Kernel backend: auto, scalar, avx2")->check(CLI::IsMember({"auto", "scalar", "avx2"}));

  std::string config, seeds, out, plot_out;
  std::vector<std::string> dirs;
  unsigned jobs = 1;

  auto* train = app.add_subcommand("train", "Run one training experiment");
  train->add_option("config", config, "Run config file")->required();

  auto* sweep = app.add_subcommand("sweep", "Run an optimizer x noise x seq_len grid over seeds");
  sweep->add_option("config", config, "Base run config file")->required();
  sweep->add_option("--seeds", seeds, "Comma-separated seeds")->required();
  sweep->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);

  auto* sim = app.add_subcommand("simulate-ode", "Integrate the gradient-dynamics ODE");
  sim->add_option("config", config, "ODE config file")->required();

  auto* cmp = app.add_subcommand("compare", "Aggregate finished runs into a comparison CSV");
  cmp->add_option("dirs", dirs, "Run directories or sweep roots")->required();
  cmp->add_option("--out", out, "Output CSV")->default_val("comparison.csv");

  auto* plot = app.add_subcommand("plot", "Render SVG charts from a comparison or steps CSV");
  plot->add_option("csv", config, "Input CSV")->required();
  plot->add_option("--out", plot_out, "Output directory (default: next to the CSV)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigExit;
  }

  try {
    if (simd == "scalar") cegm::kernels::set_backend(cegm::kernels::Backend::kScalar);
    if (simd == "avx2") cegm::kernels::set_backend(cegm::kernels::Backend::kAvx2);
    if (*train) return cmd_train(config);
    if (*sweep) return cmd_sweep(config, seeds, jobs);
    if (*sim) return cmd_simulate(config);
    if (*cmp) return cmd_compare(dirs, out.empty() ? "comparison.csv" : out);
    if (*plot) return cmd_plot(config, plot_out);
  } catch (const cegm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const cegm::FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeExit;
  }
  return kOk;
}
