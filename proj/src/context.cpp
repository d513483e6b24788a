#include "cegm/context.hpp"

#include <algorithm>
#include <cmath>

#include "cegm/error.hpp"
#include "cegm/kernels.hpp"

namespace cegm {

ContextBatch::ContextBatch(Tensor rows) : rows_(std::move(rows)) {
  if (rows_.rank() != 2)
    throw ShapeError("context batch must be an n x d matrix, got " + shape_to_string(rows_.shape()));
}

ContextBatch ContextBatch::from_table(const Tensor& table, std::span<const std::size_t> ids) {
  if (ids.empty()) throw Error("empty context: no token ids");
  if (table.rank() != 2) throw ShapeError("embedding table must be rank 2");
  std::vector<std::size_t> uniq(ids.begin(), ids.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  const std::size_t d = table.shape()[1];
  Tensor rows(Shape{uniq.size(), d});
  for (std::size_t i = 0; i < uniq.size(); ++i) {
    if (uniq[i] >= table.shape()[0])
      throw ShapeError("context id " + std::to_string(uniq[i]) + " outside embedding table");
    std::copy_n(table.row(uniq[i]).data(), d, rows.row(i).data());
  }
  return ContextBatch(std::move(rows));
}

std::vector<double> softmax(std::span<const double> scores) {
  if (scores.empty()) throw Error("empty context: softmax over zero scores");
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> w(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) z += (w[i] = std::exp(scores[i] - mx));
  for (double& v : w) v /= z;
  return w;
}

std::vector<double> score_contexts(const ContextBatch& batch) {
  const std::size_t n = batch.size();
  const std::size_t d = batch.dim();
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) kernels::axpy(1.0, batch.row(i), mean);
  for (double& m : mean) m /= static_cast<double>(n);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = kernels::dot(batch.row(i), mean) * inv_sqrt_d;
  return s;
}

ContextSummary aggregate_with_scores(const ContextBatch& batch, std::span<const double> scores) {
  if (scores.size() != batch.size())
    throw ShapeError("aggregate: " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(batch.size()) + " context rows");
  ContextSummary out;
  out.weights = softmax(scores);
  out.summary.assign(batch.dim(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) kernels::axpy(out.weights[i], batch.row(i), out.summary);
  return out;
}

ContextSummary aggregate(const ContextBatch& batch) {
  const auto s = score_contexts(batch);
  return aggregate_with_scores(batch, s);
}

AlignmentScores alignment_scores(std::span<const double> g_proj, const ContextBatch& batch) {
  if (g_proj.size() != batch.dim())
    throw ShapeError("alignment_scores: projection has length " + std::to_string(g_proj.size()) +
                     ", context dimension is " + std::to_string(batch.dim()));
  std::vector<double> raw(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) raw[i] = kernels::dot(g_proj, batch.row(i));
  return AlignmentScores{softmax(raw)};
}

std::vector<double> project_to_trailing(const Tensor& t) {
  std::vector<double> out(t.last_extent(), 0.0);
  for (std::size_t r = 0; r < t.leading_rows(); ++r) kernels::axpy(1.0, t.row(r), out);
  const double inv = 1.0 / static_cast<double>(t.leading_rows());
  for (double& v : out) v *= inv;
  return out;
}

}  // namespace cegm
