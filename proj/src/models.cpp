#include "cegm/models.hpp"

#include <algorithm>
#include <cmath>

#include "cegm/error.hpp"
#include "cegm/rng.hpp"

namespace cegm {

void CharLMSpec::validate() const {
  if (vocab_size == 0 || vocab_size > 64) throw ConfigError("vocab_size must lie in [1, 64]");
  if (embed_dim == 0) throw ConfigError("embed_dim must be positive");
  if (window == 0) throw ConfigError("window must be positive");
  if (hidden == 0) throw ConfigError("hidden must be positive");
}

CharLM::CharLM(CharLMSpec spec) : spec_(spec) { spec_.validate(); }

ParamSet CharLM::init_params(std::uint64_t seed) const {
  SplitMix64 rng(seed);
  auto uniform = [&](Shape shape, double bound) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
  };
  const std::size_t v = spec_.vocab_size, d = spec_.embed_dim, h = spec_.hidden;
  ParamSet p;
  p.add("embedding", uniform({v, d}, 1.0), Role::kEmbeddingAligned);
  p.add("hidden.weight", uniform({d, h}, 1.0 / std::sqrt(static_cast<double>(d))));
  p.add("hidden.bias", Tensor(Shape{h}));
  p.add("output.weight", uniform({v, h}, 1.0 / std::sqrt(static_cast<double>(h))),
        h == d ? Role::kEmbeddingAligned : Role::kGeneric);
  p.add("output.bias", Tensor(Shape{v}));
  return p;
}

NodeId CharLM::logits(Graph& g, const ParamSet& params, const TaskBatch& batch) const {
  if (batch.window != spec_.window)
    throw ShapeError("batch window " + std::to_string(batch.window) + " != model window " +
                     std::to_string(spec_.window));
  if (batch.inputs.size() != batch.batch * batch.window)
    throw ShapeError("batch inputs hold " + std::to_string(batch.inputs.size()) + " ids, expected " +
                     std::to_string(batch.batch * batch.window));
  const NodeId table = g.param(params, "embedding");
  const NodeId emb = g.embedding(table, batch.inputs, Shape{batch.batch, batch.window});
  const NodeId pooled = g.mean_pool(emb, 1);
  const NodeId pre = g.add(g.matmul(pooled, g.param(params, "hidden.weight")), g.param(params, "hidden.bias"));
  const NodeId hid = g.tanh(pre);
  return g.add(g.matmul(hid, g.param(params, "output.weight"), /*transpose_b=*/true),
               g.param(params, "output.bias"));
}

CharLM::Forward CharLM::forward(Graph& g, const ParamSet& params, const TaskBatch& batch) const {
  Forward f{};
  f.logits = logits(g, params, batch);
  f.loss = g.cross_entropy(f.logits, batch.targets);
  return f;
}

ContextBatch CharLM::context_for(const ParamSet& params, const TaskBatch& batch) {
  return ContextBatch::from_table(params.value("embedding"), batch.inputs);
}

std::size_t count_correct(const Tensor& logits, std::span<const std::size_t> targets) {
  std::size_t correct = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    const auto row = logits.row(r);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == targets[r]) ++correct;
  }
  return correct;
}

}  // namespace cegm
