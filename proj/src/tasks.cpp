#include "cegm/tasks.hpp"

#include <algorithm>
#include <cmath>

#include "cegm/error.hpp"
#include "cegm/kernels.hpp"
#include "cegm/rng.hpp"

namespace cegm {

std::vector<std::size_t> map_bytes(std::string_view corpus, std::size_t vocab_size) {
  if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
  std::array<bool, 256> seen{};
  for (char c : corpus) seen[static_cast<unsigned char>(c)] = true;
  std::array<std::size_t, 256> rank{};
  std::size_t next = 0;
  for (std::size_t b = 0; b < 256; ++b)
    if (seen[b]) rank[b] = next++;
  std::vector<std::size_t> ids;
  ids.reserve(corpus.size());
  for (char c : corpus) ids.push_back(rank[static_cast<unsigned char>(c)] % vocab_size);
  return ids;
}

std::vector<Window> char_windows(std::span<const std::size_t> ids, std::size_t w) {
  std::vector<Window> out;
  if (ids.size() <= w) return out;
  out.reserve(ids.size() - w);
  for (std::size_t i = 0; i + w < ids.size(); ++i)
    out.push_back(Window{std::vector<std::size_t>(ids.begin() + i, ids.begin() + i + w), ids[i + w]});
  return out;
}

void shuffle_windows(std::vector<Window>& windows, std::uint64_t seed) {
  SplitMix64 rng(seed);
  for (std::size_t i = windows.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(windows[i - 1], windows[j]);
  }
}

std::vector<TaskBatch> batch_windows(std::span<const Window> windows, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<TaskBatch> out;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    const std::size_t end = std::min(windows.size(), start + batch_size);
    TaskBatch b;
    b.batch = end - start;
    b.window = windows[start].inputs.size();
    for (std::size_t i = start; i < end; ++i) {
      b.inputs.insert(b.inputs.end(), windows[i].inputs.begin(), windows[i].inputs.end());
      b.targets.push_back(windows[i].target);
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<TaskBatch> make_char_dataset(std::string_view corpus, const CharLMSpec& spec,
                                         std::size_t batch_size, std::uint64_t seed) {
  if (corpus.empty()) throw ConfigError("corpus is empty");
  if (corpus.size() <= spec.window)
    throw ConfigError("corpus of " + std::to_string(corpus.size()) + " bytes is not longer than window " +
                      std::to_string(spec.window));
  const auto ids = map_bytes(corpus, spec.vocab_size);
  auto windows = char_windows(ids, spec.window);
  shuffle_windows(windows, seed);
  return batch_windows(windows, batch_size);
}

std::vector<TaskBatch> make_copy_task(std::size_t seq_len, std::size_t vocab_size,
                                      std::size_t num_batches, std::size_t batch_size,
                                      std::uint64_t seed) {
  if (std::find(kCopySeqLens.begin(), kCopySeqLens.end(), seq_len) == kCopySeqLens.end())
    throw ConfigError("seq_len must be one of 8, 16, 32, 64; got " + std::to_string(seq_len));
  if (vocab_size == 0 || batch_size == 0) throw ConfigError("vocab_size and batch_size must be positive");
  SplitMix64 rng(seed);
  std::vector<TaskBatch> out(num_batches);
  for (TaskBatch& b : out) {
    b.batch = batch_size;
    b.window = seq_len;
    b.inputs.resize(batch_size * seq_len);
    for (std::size_t& id : b.inputs) id = rng.below(vocab_size);
    b.targets.resize(batch_size);
    for (std::size_t r = 0; r < batch_size; ++r) b.targets[r] = b.inputs[r * seq_len];
  }
  return out;
}

void NoiseSpec::validate() const {
  if (std::find(kNoiseLevels.begin(), kNoiseLevels.end(), level) == kNoiseLevels.end())
    throw ConfigError("noise level must be one of 0, 10, 20, 30, 40; got " + std::to_string(level));
}

NoisyBatch inject_noise(const TaskBatch& batch, const NoiseSpec& spec, std::size_t vocab_size,
                        std::uint64_t seed) {
  spec.validate();
  NoisyBatch out{batch, 0};
  if (spec.level == 0) return out;
  const double p = static_cast<double>(spec.level) / 100.0;
  SplitMix64 rng(seed);
  for (std::size_t& id : out.batch.inputs) {
    if (rng.uniform() < p) {
      id = rng.below(vocab_size);
      ++out.replaced;
    }
  }
  return out;
}

QuadraticTask::QuadraticTask(Tensor a) : a_(std::move(a)) {
  if (a_.rank() != 2 || a_.shape()[0] != a_.shape()[1])
    throw ShapeError("quadratic matrix must be square, got " + shape_to_string(a_.shape()));
}

double QuadraticTask::loss(const Tensor& theta) const {
  const Tensor g = grad(theta);
  return 0.5 * kernels::dot(theta.data(), g.data());
}

Tensor QuadraticTask::grad(const Tensor& theta) const {
  if (theta.numel() != dim())
    throw ShapeError("theta has " + std::to_string(theta.numel()) + " entries, quadratic has dim " +
                     std::to_string(dim()));
  Tensor out(theta.shape());
  kernels::active().gemm_nn(dim(), dim(), 1, a_.data().data(), theta.data().data(), out.data().data(),
                            false);
  return out;
}

NodeId QuadraticTask::build_loss(Graph& g, const ParamSet& params) const {
  const NodeId theta = g.param(params, "theta");
  const NodeId at = g.matmul(g.input(a_), theta);
  return g.scale(g.sum(g.multiply(theta, at)), 0.5);
}

QuadraticTask quadratic_task(std::size_t dim, double conditioning, std::uint64_t seed) {
  if (dim == 0) throw ConfigError("quadratic dim must be >= 1");
  if (!(conditioning >= 1.0) || !std::isfinite(conditioning))
    throw ConfigError("quadratic conditioning must be >= 1");
  Tensor a(Shape{dim, dim});
  if (conditioning == 1.0) {
    for (std::size_t i = 0; i < dim; ++i) a.at(i, i) = 1.0;
    return QuadraticTask(std::move(a));
  }
  // Random rotation: modified Gram-Schmidt on a Gaussian matrix (columns).
  SplitMix64 rng(seed);
  Tensor q(Shape{dim, dim});
  for (double& v : q.data()) v = rng.normal();
  for (std::size_t j = 0; j < dim; ++j) {
    for (std::size_t prev = 0; prev < j; ++prev) {
      double proj = 0.0;
      for (std::size_t i = 0; i < dim; ++i) proj += q.at(i, j) * q.at(i, prev);
      for (std::size_t i = 0; i < dim; ++i) q.at(i, j) -= proj * q.at(i, prev);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < dim; ++i) norm += q.at(i, j) * q.at(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < dim; ++i) q.at(i, j) /= norm;
  }
  std::vector<double> spectrum(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const double frac = dim == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(dim - 1);
    spectrum[i] = std::pow(conditioning, frac);
  }
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < dim; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) s += q.at(r, k) * spectrum[k] * q.at(c, k);
      a.at(r, c) = s;
    }
  // Exact symmetry.
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = r + 1; c < dim; ++c) a.at(c, r) = a.at(r, c);
  return QuadraticTask(std::move(a));
}

Coherence embedding_coherence(const Tensor& table, std::span<const std::size_t> tokens_a,
                              std::span<const std::size_t> tokens_b) {
  if (tokens_a.empty() || tokens_b.empty()) throw ConfigError("coherence needs nonempty token sequences");
  const std::size_t d = table.last_extent();
  auto pooled = [&](std::span<const std::size_t> toks) {
    std::vector<double> v(d, 0.0);
    for (std::size_t t : toks) {
      if (t >= table.shape()[0]) throw ShapeError("token " + std::to_string(t) + " outside embedding table");
      kernels::axpy(1.0, table.row(t), v);
    }
    for (double& x : v) x /= static_cast<double>(toks.size());
    return v;
  };
  const auto pa = pooled(tokens_a);
  const auto pb = pooled(tokens_b);
  const double na = std::sqrt(kernels::sum_squares(pa));
  const double nb = std::sqrt(kernels::sum_squares(pb));
  if (na == 0.0 || nb == 0.0) return Coherence{0.0, true};
  return Coherence{std::clamp(kernels::dot(pa, pb) / (na * nb), -1.0, 1.0), false};
}

}  // namespace cegm
