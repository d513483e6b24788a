#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cegm/tensor.hpp"

namespace cegm {

// n x d matrix of context embedding rows, n >= 1 and d >= 1.
class ContextBatch {
 public:
  // Throws ShapeError unless rows is rank 2 (extents are positive by Tensor).
  explicit ContextBatch(Tensor rows);

  // Rows of `table` selected by `ids`, deduplicated and in ascending id order.
  static ContextBatch from_table(const Tensor& table, std::span<const std::size_t> ids);

  std::size_t size() const noexcept { return rows_.shape()[0]; }
  std::size_t dim() const noexcept { return rows_.shape()[1]; }
  std::span<const double> row(std::size_t i) const noexcept { return rows_.row(i); }
  const Tensor& rows() const noexcept { return rows_; }

 private:
  Tensor rows_;
};

struct ContextSummary {
  std::vector<double> weights;  // length n, sums to 1
  std::vector<double> summary;  // length d, sum_i weights[i] * row_i
};

struct AlignmentScores {
  std::vector<double> scores;  // length n, sums to 1
};

// Max-subtracted softmax of a score vector.
std::vector<double> softmax(std::span<const double> scores);

// s_i = <row_i, mean of rows> / sqrt(d).
std::vector<double> score_contexts(const ContextBatch& batch);

// weights = softmax(score_contexts(batch)), summary = weighted row sum.
ContextSummary aggregate(const ContextBatch& batch);
// Aggregation with caller-supplied raw scores (one per row).
ContextSummary aggregate_with_scores(const ContextBatch& batch, std::span<const double> scores);

// softmax_i <g_proj, row_i>. Throws ShapeError if g_proj.size() != d.
AlignmentScores alignment_scores(std::span<const double> g_proj, const ContextBatch& batch);

// Mean of the trailing-dimension rows of t: a length last_extent() vector.
std::vector<double> project_to_trailing(const Tensor& t);

}  // namespace cegm
