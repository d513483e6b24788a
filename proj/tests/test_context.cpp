#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cegm/context.hpp"
#include "cegm/error.hpp"
#include "support.hpp"

using namespace cegm;

namespace {

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

ContextBatch random_batch(std::size_t n, std::size_t d, SplitMix64& rng) {
  return ContextBatch(test::random_tensor({n, d}, rng));
}

}  // namespace

TEST_CASE("batch construction") {
  CHECK_THROWS_AS(ContextBatch(Tensor(Shape{3})), ShapeError);
  const Tensor table = Tensor::matrix(4, 2, {0, 1, 2, 3, 4, 5, 6, 7});
  const std::vector<std::size_t> ids{3, 1, 3, 1, 0};
  const ContextBatch b = ContextBatch::from_table(table, ids);
  CHECK(b.size() == 3);
  CHECK(b.rows() == Tensor::matrix(3, 2, {0, 1, 2, 3, 6, 7}));
  CHECK_THROWS(softmax(std::vector<double>{}));
}

TEST_CASE("score_contexts examples") {
  const ContextBatch same(Tensor::matrix(3, 2, {1, 2, 1, 2, 1, 2}));
  const auto s = score_contexts(same);
  CHECK(s[0] == s[1]);
  CHECK(s[1] == s[2]);

  const ContextBatch one(Tensor::matrix(1, 3, {1, 2, 2}));
  CHECK(score_contexts(one)[0] == doctest::Approx(9.0 / std::sqrt(3.0)).epsilon(1e-15));

  // mean = [0.5, 0.5]; <row, mean> = 0.5 for both rows.
  const ContextBatch eye(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  const auto e = score_contexts(eye);
  CHECK(e[0] == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(e[1] == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("aggregate examples") {
  const ContextBatch same(Tensor::matrix(3, 2, {1, -2, 1, -2, 1, -2}));
  const auto a = aggregate(same);
  for (double w : a.weights) CHECK(w == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(a.summary[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(a.summary[1] == doctest::Approx(-2.0).epsilon(1e-15));

  const ContextBatch one(Tensor::matrix(1, 2, {0.3, 0.4}));
  const auto b = aggregate(one);
  CHECK(b.weights == std::vector<double>{1.0});
  CHECK(b.summary == std::vector<double>{0.3, 0.4});

  // d = 1, rows a and 0: mean a/2, scores [a^2/2, 0]. a^2 = 2 ln 2 gives [ln 2, 0].
  const double r = std::sqrt(2.0 * std::log(2.0));
  const ContextBatch crafted(Tensor::matrix(2, 1, {r, 0.0}));
  const auto s = score_contexts(crafted);
  CHECK(s[0] == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(s[1] == 0.0);
  const auto c = aggregate(crafted);
  CHECK(c.weights[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(c.weights[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("alignment_scores examples") {
  const ContextBatch eye(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  const std::vector<double> g{1, 0};
  const auto a = alignment_scores(g, eye);
  const double e = std::exp(1.0);
  CHECK(a.scores[0] == doctest::Approx(e / (e + 1)).epsilon(1e-15));
  CHECK(a.scores[1] == doctest::Approx(1 / (e + 1)).epsilon(1e-15));

  const ContextBatch flat(Tensor::matrix(3, 2, {1, 0, 2, 0, -1, 0}));
  const std::vector<double> orth{0, 5};
  for (double v : alignment_scores(orth, flat).scores) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const ContextBatch same(Tensor::matrix(2, 2, {1, 1, 1, 1}));
  const std::vector<double> any{0.3, -2};
  const auto u = alignment_scores(any, same);
  CHECK(u.scores[0] == u.scores[1]);

  const std::vector<double> wrong{1, 2, 3};
  CHECK_THROWS_AS(alignment_scores(wrong, eye), ShapeError);
}

TEST_CASE("weights are normalized and ignore score shifts") {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(10), d = 1 + rng.below(8);
    const ContextBatch b = random_batch(n, d, rng);
    const auto a = aggregate(b);
    CHECK(std::abs(total(a.weights) - 1.0) <= 1e-9);
    for (double w : a.weights) CHECK(w >= 0.0);

    auto scores = score_contexts(b);
    const double c = rng.uniform(-100.0, 100.0);
    for (auto& s : scores) s += c;
    const auto shifted = aggregate_with_scores(b, scores);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(shifted.weights[i] - a.weights[i]) <= 1e-12);

    const auto g = test::random_tensor({d}, rng);
    const auto al = alignment_scores(g.data(), b);
    CHECK(std::abs(total(al.scores) - 1.0) <= 1e-9);
    for (double v : al.scores) CHECK(v >= 0.0);
  }
}

TEST_CASE("summary stays in the convex hull and is permutation invariant") {
  SplitMix64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(10), d = 1 + rng.below(8);
    const ContextBatch b = random_batch(n, d, rng);
    const auto a = aggregate(b);
    for (std::size_t j = 0; j < d; ++j) {
      double lo = b.row(0)[j], hi = lo;
      for (std::size_t i = 0; i < n; ++i) {
        lo = std::min(lo, b.row(i)[j]);
        hi = std::max(hi, b.row(i)[j]);
      }
      CHECK(a.summary[j] >= lo - 1e-12);
      CHECK(a.summary[j] <= hi + 1e-12);
    }

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    Tensor rows(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i) std::copy(b.row(perm[i]).begin(), b.row(perm[i]).end(), rows.row(i).begin());
    const auto p = aggregate(ContextBatch(rows));
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p.weights[i] - a.weights[perm[i]]) <= 1e-12);
    for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(p.summary[j] - a.summary[j]) <= 1e-12);
  }
}

TEST_CASE("project_to_trailing averages leading rows") {
  const Tensor t(Shape{2, 2, 3}, std::vector<double>{1, 2, 3, 3, 2, 1, 0, 0, 0, 4, 4, 4});
  const auto p = project_to_trailing(t);
  CHECK(p == std::vector<double>{2, 2, 2});
}
