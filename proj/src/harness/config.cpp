#include "cegm/harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cegm/error.hpp"
#include "cegm/harness/hash.hpp"
#include "cegm/tasks.hpp"

namespace cegm::harness {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || !std::isfinite(out))
    throw ConfigError("key '" + std::string(key) + "': '" + std::string(v) + "' is not a finite number");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end)
    throw ConfigError("key '" + std::string(key) + "': '" + std::string(v) + "' is not a non-negative integer");
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto piece = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!piece.empty()) out.emplace_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::uint64_t> parse_u64_list(std::string_view s) {
  std::vector<std::uint64_t> out;
  for (const auto& piece : split_list(s)) out.push_back(to_u64("list", piece));
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

KeyValues KeyValues::parse(std::string_view text, const std::string& origin) {
  KeyValues kv;
  kv.origin_ = origin;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    if (kv.values_.contains(key))
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    kv.values_.emplace(key, value);
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  KeyValues kv = parse(ss.str(), path.string());
  kv.base_dir_ = path.parent_path();
  return kv;
}

bool KeyValues::has(std::string_view key) const { return values_.contains(std::string(key)); }

std::string KeyValues::str(std::string_view key) const {
  auto it = values_.find(std::string(key));
  if (it == values_.end()) throw ConfigError(origin_ + ": missing required key '" + std::string(key) + "'");
  return it->second;
}

std::string KeyValues::str(std::string_view key, std::string_view fallback) const {
  return has(key) ? str(key) : std::string(fallback);
}

double KeyValues::number(std::string_view key) const { return to_double(key, str(key)); }
double KeyValues::number(std::string_view key, double fallback) const {
  return has(key) ? number(key) : fallback;
}
std::uint64_t KeyValues::integer(std::string_view key) const { return to_u64(key, str(key)); }
std::uint64_t KeyValues::integer(std::string_view key, std::uint64_t fallback) const {
  return has(key) ? integer(key) : fallback;
}

std::vector<double> KeyValues::numbers(std::string_view key) const {
  std::vector<double> out;
  for (const auto& piece : split_list(str(key))) out.push_back(to_double(key, piece));
  return out;
}

std::vector<std::string> KeyValues::list(std::string_view key) const { return split_list(str(key)); }

void KeyValues::set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }

std::vector<std::string> KeyValues::unknown_keys(const std::vector<std::string_view>& known) const {
  std::vector<std::string> out;
  for (const auto& [k, _] : values_)
    if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
  return out;
}

std::filesystem::path KeyValues::path(std::string_view key) const {
  std::filesystem::path p = str(key);
  if (p.is_relative() && !base_dir_.empty()) p = base_dir_ / p;
  return p;
}

std::string_view task_name(TaskKind t) noexcept {
  switch (t) {
    case TaskKind::kCharLm: return "charlm";
    case TaskKind::kCopy: return "copy";
    case TaskKind::kQuadratic: return "quadratic";
  }
  return "?";
}

TaskKind parse_task(std::string_view s) {
  if (s == "charlm") return TaskKind::kCharLm;
  if (s == "copy") return TaskKind::kCopy;
  if (s == "quadratic") return TaskKind::kQuadratic;
  throw ConfigError("task must be one of charlm, copy, quadratic; got '" + std::string(s) + "'");
}

namespace {

const std::vector<std::string_view>& known_run_keys() {
  static const std::vector<std::string_view> keys{
      "task", "optimizer", "eta", "lambda0", "lambda_min", "lambda_max", "delta_lambda", "mu",
      "norm_mode", "epsilon", "beta", "kernel", "seed", "epochs", "batch_size", "noise", "seq_len",
      "convergence_threshold", "convergence_metric", "output_dir", "corpus", "vocab_size",
      "embed_dim", "window", "hidden", "train_batches", "eval_batches", "quad_dim",
      "quad_conditioning", "theta0", "steps_per_epoch", "resume",
      // sweep grid, read by the sweep command
      "sweep_optimizers", "sweep_noise", "sweep_seq_len"};
  return keys;
}

}  // namespace

RunConfig RunConfig::from_key_values(const KeyValues& kv) {
  if (const auto unknown = kv.unknown_keys(known_run_keys()); !unknown.empty())
    throw ConfigError("unknown config key '" + unknown.front() + "'");
  RunConfig c;
  c.task = parse_task(kv.str("task", "quadratic"));
  c.optimizer = parse_optimizer(kv.str("optimizer", "cegm"));
  c.cegm.eta = kv.number("eta", c.cegm.eta);
  c.cegm.lambda0 = kv.number("lambda0", c.cegm.lambda0);
  c.cegm.lambda_min = kv.number("lambda_min", c.cegm.lambda_min);
  c.cegm.lambda_max = kv.number("lambda_max", c.cegm.lambda_max);
  c.cegm.delta_lambda = kv.number("delta_lambda", c.cegm.delta_lambda);
  c.cegm.mu = kv.number("mu", c.cegm.mu);
  c.cegm.norm_mode = parse_norm_mode(kv.str("norm_mode", "unit"));
  c.cegm.epsilon = kv.number("epsilon", c.cegm.epsilon);
  c.beta = kv.number("beta", c.beta);
  c.kernel = parse_kernel_kind(kv.str("kernel", "cosine"));
  c.seed = kv.integer("seed", c.seed);
  c.epochs = kv.integer("epochs", c.epochs);
  c.batch_size = kv.integer("batch_size", c.batch_size);
  c.noise = static_cast<int>(kv.integer("noise", 0));
  c.seq_len = kv.integer("seq_len", c.seq_len);
  c.convergence_threshold = kv.number("convergence_threshold", c.convergence_threshold);
  const std::string metric = kv.str("convergence_metric", c.task == TaskKind::kQuadratic ? "loss" : "accuracy");
  if (metric == "accuracy") c.convergence_metric = ConvergenceMetric::kAccuracy;
  else if (metric == "loss") c.convergence_metric = ConvergenceMetric::kLoss;
  else throw ConfigError("convergence_metric must be 'accuracy' or 'loss'");
  if (kv.has("output_dir")) c.output_dir = kv.path("output_dir");
  if (kv.has("corpus")) c.corpus = kv.path("corpus");
  c.model.vocab_size = kv.integer("vocab_size", c.model.vocab_size);
  c.model.embed_dim = kv.integer("embed_dim", c.model.embed_dim);
  c.model.window = kv.integer("window", c.model.window);
  c.model.hidden = kv.integer("hidden", c.model.hidden);
  c.train_batches = kv.integer("train_batches", c.train_batches);
  c.eval_batches = kv.integer("eval_batches", c.eval_batches);
  c.quad_dim = kv.integer("quad_dim", c.quad_dim);
  c.quad_conditioning = kv.number("quad_conditioning", c.quad_conditioning);
  if (kv.has("theta0")) c.theta0 = kv.numbers("theta0");
  c.steps_per_epoch = kv.integer("steps_per_epoch", c.steps_per_epoch);
  if (kv.has("resume")) c.resume = kv.path("resume");
  if (c.task == TaskKind::kCopy) c.model.window = c.seq_len;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return from_key_values(KeyValues::load(path)); }

void RunConfig::validate() const {
  cegm.validate();
  if (!std::isfinite(beta)) throw ConfigError("beta must be finite");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  NoiseSpec{noise}.validate();
  if (!(convergence_threshold == convergence_threshold)) throw ConfigError("convergence_threshold is NaN");
  switch (task) {
    case TaskKind::kCharLm:
      model.validate();
      if (corpus.empty()) throw ConfigError("task charlm needs a corpus path");
      if (!std::filesystem::exists(corpus)) throw ConfigError("corpus file " + corpus.string() + " does not exist");
      break;
    case TaskKind::kCopy:
      model.validate();
      if (std::find(kCopySeqLens.begin(), kCopySeqLens.end(), seq_len) == kCopySeqLens.end())
        throw ConfigError("seq_len must be one of 8, 16, 32, 64");
      if (train_batches == 0 || eval_batches == 0) throw ConfigError("copy task needs train and eval batches");
      break;
    case TaskKind::kQuadratic:
      if (quad_dim == 0) throw ConfigError("quad_dim must be >= 1");
      if (!(quad_conditioning >= 1.0)) throw ConfigError("quad_conditioning must be >= 1");
      if (!theta0.empty() && theta0.size() != quad_dim)
        throw ConfigError("theta0 has " + std::to_string(theta0.size()) + " entries, quad_dim is " +
                          std::to_string(quad_dim));
      if (steps_per_epoch == 0) throw ConfigError("steps_per_epoch must be positive");
      break;
  }
  if (!resume.empty() && !std::filesystem::exists(resume))
    throw ConfigError("resume checkpoint " + resume.string() + " does not exist");
}

std::vector<std::pair<std::string, std::string>> RunConfig::echo() const {
  std::vector<std::pair<std::string, std::string>> e;
  auto u = [](std::uint64_t v) { return std::to_string(v); };
  e.emplace_back("task", std::string(task_name(task)));
  e.emplace_back("optimizer", std::string(optimizer_name(optimizer)));
  e.emplace_back("eta", format_double(cegm.eta));
  e.emplace_back("lambda0", format_double(cegm.lambda0));
  e.emplace_back("lambda_min", format_double(cegm.lambda_min));
  e.emplace_back("lambda_max", format_double(cegm.lambda_max));
  e.emplace_back("delta_lambda", format_double(cegm.delta_lambda));
  e.emplace_back("mu", format_double(cegm.mu));
  e.emplace_back("norm_mode", std::string(norm_mode_name(cegm.norm_mode)));
  e.emplace_back("epsilon", format_double(cegm.epsilon));
  e.emplace_back("beta", format_double(beta));
  e.emplace_back("kernel", std::string(kernel_kind_name(kernel)));
  e.emplace_back("seed", u(seed));
  e.emplace_back("epochs", u(epochs));
  e.emplace_back("batch_size", u(batch_size));
  e.emplace_back("noise", std::to_string(noise));
  e.emplace_back("seq_len", u(seq_len));
  e.emplace_back("convergence_threshold", format_double(convergence_threshold));
  e.emplace_back("convergence_metric", convergence_metric == ConvergenceMetric::kAccuracy ? "accuracy" : "loss");
  e.emplace_back("output_dir", output_dir.string());
  e.emplace_back("corpus", corpus.string());
  e.emplace_back("vocab_size", u(model.vocab_size));
  e.emplace_back("embed_dim", u(model.embed_dim));
  e.emplace_back("window", u(model.window));
  e.emplace_back("hidden", u(model.hidden));
  e.emplace_back("train_batches", u(train_batches));
  e.emplace_back("eval_batches", u(eval_batches));
  e.emplace_back("quad_dim", u(quad_dim));
  e.emplace_back("quad_conditioning", format_double(quad_conditioning));
  std::string th;
  for (std::size_t i = 0; i < theta0.size(); ++i) th += (i ? "," : "") + format_double(theta0[i]);
  e.emplace_back("theta0", th);
  e.emplace_back("steps_per_epoch", u(steps_per_epoch));
  e.emplace_back("resume", resume.string());
  return e;
}

std::array<std::uint8_t, 32> RunConfig::identity_hash() const {
  std::string canon;
  for (const auto& [k, v] : echo()) {
    if (k == "epochs" || k == "output_dir" || k == "resume" || k == "convergence_threshold" ||
        k == "convergence_metric")
      continue;
    if (k == "corpus") {
      canon += "corpus_sha256=" + (corpus.empty() ? std::string() : sha256_file_hex(corpus)) + "\n";
      continue;
    }
    canon += k + "=" + v + "\n";
  }
  return sha256(canon);
}

}  // namespace cegm::harness
