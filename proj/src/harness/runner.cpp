#include "cegm/harness/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "cegm/analysis.hpp"
#include "cegm/autodiff.hpp"
#include "cegm/error.hpp"
#include "cegm/harness/checkpoint.hpp"
#include "cegm/harness/compare.hpp"
#include "cegm/harness/hash.hpp"
#include "cegm/kernels.hpp"
#include "cegm/rng.hpp"
#include "cegm/tasks.hpp"

namespace cegm::harness {

namespace {

// Seed stream tags.
constexpr std::uint64_t kTagInit = 1;
constexpr std::uint64_t kTagCopyTrain = 2;
constexpr std::uint64_t kTagCopyEval = 3;
constexpr std::uint64_t kTagQuadMatrix = 4;
constexpr std::uint64_t kTagQuadTheta = 5;
constexpr std::uint64_t kTagShuffle = 1000;
constexpr std::uint64_t kTagNoise = 1 << 20;

std::vector<std::size_t> unique_sorted(std::vector<std::size_t> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r' || c == '#') c = ' ';
  return s;
}

// Everything one run needs besides the optimizer.
struct Workload {
  TaskKind kind;
  std::optional<CharLM> model;
  std::optional<QuadraticTask> quad;
  std::vector<Window> train_windows;          // charlm
  std::vector<TaskBatch> fixed_train;         // copy
  std::vector<TaskBatch> eval;                // charlm / copy, noise applied
  ParamSet params;
};

Workload build_workload(const RunConfig& cfg) {
  Workload w;
  w.kind = cfg.task;
  switch (cfg.task) {
    case TaskKind::kCharLm: {
      const std::string corpus = read_file(cfg.corpus);
      if (corpus.empty()) throw ConfigError("corpus " + cfg.corpus.string() + " is empty");
      w.model.emplace(cfg.model);
      const auto ids = map_bytes(corpus, cfg.model.vocab_size);
      auto windows = char_windows(ids, cfg.model.window);
      std::vector<Window> eval;
      for (std::size_t i = 0; i < windows.size(); ++i)
        (i % 10 == 9 ? eval : w.train_windows).push_back(std::move(windows[i]));
      if (w.train_windows.empty() || eval.empty())
        throw ConfigError("corpus too short: need at least window + 10 bytes");
      w.eval = batch_windows(eval, cfg.batch_size);
      break;
    }
    case TaskKind::kCopy: {
      w.model.emplace(cfg.model);
      w.fixed_train = make_copy_task(cfg.seq_len, cfg.model.vocab_size, cfg.train_batches, cfg.batch_size,
                                     derive_seed(cfg.seed, kTagCopyTrain));
      w.eval = make_copy_task(cfg.seq_len, cfg.model.vocab_size, cfg.eval_batches, cfg.batch_size,
                              derive_seed(cfg.seed, kTagCopyEval));
      break;
    }
    case TaskKind::kQuadratic: {
      w.quad.emplace(quadratic_task(cfg.quad_dim, cfg.quad_conditioning, derive_seed(cfg.seed, kTagQuadMatrix)));
      Tensor theta(Shape{cfg.quad_dim});
      if (!cfg.theta0.empty()) {
        std::copy(cfg.theta0.begin(), cfg.theta0.end(), theta.data().begin());
      } else {
        SplitMix64 rng(derive_seed(cfg.seed, kTagQuadTheta));
        for (double& v : theta.data()) v = rng.normal();
      }
      w.params.add("theta", std::move(theta));
      break;
    }
  }
  if (w.model) {
    w.params = w.model->init_params(derive_seed(cfg.seed, kTagInit));
    NoiseSpec noise{cfg.noise};
    for (std::size_t b = 0; b < w.eval.size(); ++b)
      w.eval[b] = inject_noise(w.eval[b], noise, cfg.model.vocab_size, derive_seed(cfg.seed, kTagNoise + b)).batch;
  }
  return w;
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalResult evaluate(const Workload& w, const ParamSet& params) {
  if (w.quad) return EvalResult{w.quad->loss(params.value("theta")), std::nan("")};
  double total = 0.0;
  std::size_t correct = 0, count = 0;
  for (const TaskBatch& b : w.eval) {
    Graph g;
    const auto f = w.model->forward(g, params, b);
    total += g.value(f.loss).item() * static_cast<double>(b.batch);
    correct += count_correct(g.value(f.logits), b.targets);
    count += b.batch;
  }
  return EvalResult{total / static_cast<double>(count), static_cast<double>(correct) / static_cast<double>(count)};
}

struct StepInputs {
  double loss;
  GradMap grads;
  std::optional<ContextBatch> context;
  Tensor grad_rows;
};

StepInputs forward_backward(const Workload& w, const ParamSet& params, const TaskBatch* batch) {
  Graph g;
  if (w.quad) {
    const NodeId loss = w.quad->build_loss(g, params);
    GradMap grads = g.backward(loss, params);
    const Tensor& theta = params.value("theta");
    const std::size_t d = theta.numel();
    ContextBatch ctx(Tensor(Shape{1, d}, theta.values()));
    Tensor rows(Shape{1, d}, grads.at("theta").values());
    return StepInputs{g.value(loss).item(), std::move(grads), std::move(ctx), std::move(rows)};
  }
  const auto f = w.model->forward(g, params, *batch);
  GradMap grads = g.backward(f.loss, params);
  const auto ids = unique_sorted(batch->inputs);
  const Tensor& demb = grads.at("embedding");
  Tensor rows(Shape{ids.size(), demb.last_extent()});
  for (std::size_t i = 0; i < ids.size(); ++i) std::copy_n(demb.row(ids[i]).data(), demb.last_extent(), rows.row(i).data());
  return StepInputs{g.value(f.loss).item(), std::move(grads), CharLM::context_for(params, *batch), std::move(rows)};
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

void write_manifest(const RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& extra) {
  std::ostringstream os;
  os << "manifest_version = 1\n";
  for (const auto& [k, v] : extra)
    if (k == "status") os << k << " = " << v << '\n';
  for (const auto& [k, v] : cfg.echo()) os << "config." << k << " = " << one_line(v) << '\n';
  for (const auto& [k, v] : extra)
    if (k != "status") os << k << " = " << one_line(v) << '\n';
  write_text(cfg.output_dir / kManifestFile, os.str());
}

RunReport run_impl(const RunConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  Workload w = build_workload(cfg);
  ParamSet& params = w.params;
  Optimizer opt(cfg.optimizer, cfg.cegm, params);
  const auto hash = cfg.identity_hash();

  std::uint64_t start_epoch = 0;
  std::uint64_t global_step = 0;
  if (!cfg.resume.empty()) {
    Checkpoint ck = load_checkpoint(cfg.resume);
    if (ck.config_hash != hash)
      throw ConfigError("checkpoint " + cfg.resume.string() + " was written by a different configuration");
    if (ck.epochs_completed > cfg.epochs)
      throw ConfigError("checkpoint has " + std::to_string(ck.epochs_completed) + " epochs, more than epochs = " +
                        std::to_string(cfg.epochs));
    for (const auto& p : params)
      if (!ck.params.contains(p.name) || !ck.params.value(p.name).same_shape(p.value) ||
          ck.params.role(p.name) != p.role)
        throw FormatError("checkpoint parameter '" + p.name + "' does not match the model");
    if (ck.params.size() != params.size()) throw FormatError("checkpoint parameter count mismatch");
    params = ck.params;
    opt.restore(ck.optimizer, params);
    start_epoch = ck.epochs_completed;
    global_step = ck.optimizer.step;
  }

  RunReport report;
  for (std::uint64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<TaskBatch> batches;
    if (w.kind == TaskKind::kCharLm) {
      auto windows = w.train_windows;
      shuffle_windows(windows, derive_seed(cfg.seed, kTagShuffle + epoch));
      batches = batch_windows(windows, cfg.batch_size);
    } else if (w.kind == TaskKind::kCopy) {
      batches = w.fixed_train;
    }
    const std::size_t steps = w.quad ? cfg.steps_per_epoch : batches.size();
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      StepInputs in = forward_backward(w, params, w.quad ? nullptr : &batches[s]);
      const double lambda = opt.lambda();
      const double e = entanglement_scalar(*in.context, in.grad_rows, lambda, cfg.kernel);
      const StepRecord rec = opt.step(params, in.grads, *in.context, in.loss);
      ++global_step;
      loss_sum += in.loss;
      report.steps.push_back(StepRow{global_step, epoch + 1, in.loss, regularized_loss(in.loss, e, cfg.beta), e,
                                     rec.lambda_used, rec.grad_norm(), rec.update_norm(), rec.degenerate()});
    }
    const EvalResult ev = evaluate(w, params);
    report.epochs.push_back(EpochRow{epoch + 1, loss_sum / static_cast<double>(steps), ev.loss, ev.accuracy,
                                     std::exp(ev.loss)});
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  RunSummary& sum = report.summary;
  sum.convergence_epochs = convergence_epochs(report.epochs, cfg.convergence_threshold, cfg.convergence_metric);
  const double nan = std::nan("");
  sum.final_train_loss = report.epochs.empty() ? nan : report.epochs.back().train_loss;
  sum.final_eval_loss = report.epochs.empty() ? nan : report.epochs.back().eval_loss;
  sum.final_eval_accuracy = report.epochs.empty() ? nan : report.epochs.back().eval_accuracy;
  sum.final_perplexity = report.epochs.empty() ? nan : report.epochs.back().perplexity;
  sum.wall_time_s = wall;
  sum.steps_per_second = wall > 0.0 ? static_cast<double>(report.steps.size()) / wall : 0.0;
  // Parameters, one gradient set, and optimizer slots.
  sum.state_bytes = 2 * params.total_bytes() + opt.state_bytes();

  Checkpoint ck;
  if (w.model) ck.model = w.model->spec();
  else ck.model = CharLMSpec{0, 0, 0, 0};
  ck.seed = cfg.seed;
  ck.config_hash = hash;
  ck.epochs_completed = cfg.epochs;
  ck.params = params;
  ck.optimizer = opt.snapshot();

  {
    std::ostringstream os;
    write_steps_csv(os, report.steps);
    write_text(cfg.output_dir / kStepsFile, os.str());
  }
  {
    std::ostringstream os;
    write_epochs_csv(os, report.epochs);
    write_text(cfg.output_dir / kEpochsFile, os.str());
  }
  save_checkpoint(cfg.output_dir / kCheckpointFile, ck);

  auto fmt = [](double v) { return std::isnan(v) ? std::string("nan") : format_double(v); };
  std::vector<std::pair<std::string, std::string>> extra{
      {"status", "ok"},
      {"config_hash", to_hex(hash)},
      {"kernel_backend", std::string(kernels::backend_name(kernels::backend()))},
      {"steps_total", std::to_string(report.steps.size())},
      {"summary.convergence_epochs",
       sum.convergence_epochs ? std::to_string(*sum.convergence_epochs) : std::string("not-reached")},
      {"summary.final_train_loss", fmt(sum.final_train_loss)},
      {"summary.final_eval_loss", fmt(sum.final_eval_loss)},
      {"summary.final_eval_accuracy", fmt(sum.final_eval_accuracy)},
      {"summary.final_perplexity", fmt(sum.final_perplexity)},
      {"summary.wall_time_s", fmt(sum.wall_time_s)},
      {"summary.steps_per_second", fmt(sum.steps_per_second)},
      {"summary.state_bytes", std::to_string(sum.state_bytes)},
      {"sha256.steps.csv", sha256_file_hex(cfg.output_dir / kStepsFile)},
      {"sha256.epochs.csv", sha256_file_hex(cfg.output_dir / kEpochsFile)},
      {"sha256.checkpoint.bin", sha256_file_hex(cfg.output_dir / kCheckpointFile)},
  };
  write_manifest(cfg, extra);
  return report;
}

}  // namespace

RunReport run_experiment(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  try {
    return run_impl(cfg);
  } catch (const std::exception& e) {
    const bool config = dynamic_cast<const ConfigError*>(&e) != nullptr;
    try {
      write_manifest(cfg, {{"status", "failed"},
                           {"error_kind", config ? "config" : "runtime"},
                           {"error", e.what()}});
    } catch (...) {
    }
    throw;
  }
}

SweepGrid sweep_grid_from(const KeyValues& kv, std::vector<std::uint64_t> seeds) {
  SweepGrid g;
  if (kv.has("sweep_optimizers")) {
    for (const auto& s : kv.list("sweep_optimizers")) g.optimizers.push_back(parse_optimizer(s));
  } else {
    g.optimizers = {OptimizerKind::kCegm, OptimizerKind::kSgd, OptimizerKind::kAdam, OptimizerKind::kNormGd};
  }
  if (kv.has("sweep_noise")) {
    for (auto v : parse_u64_list(kv.str("sweep_noise"))) {
      NoiseSpec{static_cast<int>(v)}.validate();
      g.noise_levels.push_back(static_cast<int>(v));
    }
  } else {
    g.noise_levels.assign(kNoiseLevels.begin(), kNoiseLevels.end());
  }
  if (kv.has("sweep_seq_len")) {
    g.seq_lens = parse_u64_list(kv.str("sweep_seq_len"));
  } else {
    g.seq_lens.assign(kCopySeqLens.begin(), kCopySeqLens.end());
  }
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  g.seeds = std::move(seeds);
  return g;
}

std::filesystem::path run_sweep(const RunConfig& base, const SweepGrid& grid, unsigned jobs) {
  std::vector<RunConfig> cells;
  for (OptimizerKind opt : grid.optimizers)
    for (int noise : grid.noise_levels)
      for (std::uint64_t len : grid.seq_lens)
        for (std::uint64_t seed : grid.seeds) {
          RunConfig c = base;
          c.optimizer = opt;
          c.noise = noise;
          c.seq_len = len;
          if (c.task != TaskKind::kQuadratic) c.model.window = len;
          c.seed = seed;
          c.resume.clear();
          c.output_dir = base.output_dir / (std::string(task_name(c.task)) + "_" + std::string(optimizer_name(opt)) +
                                            "_n" + std::to_string(noise) + "_L" + std::to_string(len) + "_s" +
                                            std::to_string(seed));
          c.validate();
          cells.push_back(std::move(c));
        }

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::vector<std::string> failures;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        run_experiment(cells[i]);
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        failures.push_back(cells[i].output_dir.string() + ": " + e.what());
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(cells.size())));
  std::vector<std::thread> threads;
  for (unsigned t = 1; t < n; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  std::vector<RunRecord> runs;
  for (const auto& c : cells)
    if (KeyValues::load(c.output_dir / kManifestFile).str("status", "") == "ok") runs.push_back(load_run(c.output_dir));
  const auto path = base.output_dir / kComparisonFile;
  if (!runs.empty()) {
    std::ostringstream os;
    write_comparison_csv(os, compare_runs(runs));
    write_text(path, os.str());
  }
  if (!failures.empty())
    throw NumericError(std::to_string(failures.size()) + " sweep run(s) failed; first: " + failures.front());
  return path;
}

}  // namespace cegm::harness
