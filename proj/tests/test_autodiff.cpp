#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cegm/error.hpp"
#include "cegm/models.hpp"
#include "support.hpp"

using namespace cegm;
using cegm::test::fd_check_graph;
using cegm::test::random_tensor;

TEST_CASE("tensor construction and accessors") {
  Tensor t(Shape{2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.leading_rows() == 2);
  CHECK(t.last_extent() == 3);
  CHECK(Tensor().numel() == 1);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(t.item(), ShapeError);
  CHECK(Tensor::vector({3, 4}).frobenius_norm() == doctest::Approx(5.0));
  Tensor u = t;
  CHECK(u == t);
  u[5] = -0.0;
  CHECK_FALSE(u == t);
}

TEST_CASE("forward examples") {
  ParamSet p;
  p.add("x", Tensor::vector({1, 2, 3}));
  Graph g;
  const NodeId x = g.param(p, "x");
  CHECK(g.value(x) == Tensor::vector({1, 2, 3}));

  ParamSet q;
  q.add("x", Tensor::scalar(3.0));
  Graph h;
  const NodeId xs = h.param(q, "x");
  const NodeId y = h.multiply(xs, xs);
  CHECK(h.value(y).item() == 9.0);
  CHECK(h.backward(y, q).at("x").item() == 6.0);
}

TEST_CASE("two-layer MLP forward matches straight-line evaluation") {
  SplitMix64 rng(5);
  const std::size_t B = 3, I = 4, H = 5, O = 2;
  ParamSet p;
  p.add("w1", random_tensor({I, H}, rng));
  p.add("b1", random_tensor({H}, rng));
  p.add("w2", random_tensor({H, O}, rng));
  const Tensor x = random_tensor({B, I}, rng);

  Graph g;
  const NodeId h = g.tanh(g.add(g.matmul(g.input(x), g.param(p, "w1")), g.param(p, "b1")));
  const NodeId out = g.matmul(h, g.param(p, "w2"));
  const Tensor& got = g.value(out);
  REQUIRE(got.shape() == Shape{B, O});

  const Tensor& w1 = p.value("w1");
  const Tensor& b1 = p.value("b1");
  const Tensor& w2 = p.value("w2");
  for (std::size_t b = 0; b < B; ++b) {
    double hid[H];
    for (std::size_t j = 0; j < H; ++j) {
      double s = b1[j];
      for (std::size_t i = 0; i < I; ++i) s += x.at(b, i) * w1.at(i, j);
      hid[j] = std::tanh(s);
    }
    for (std::size_t o = 0; o < O; ++o) {
      double s = 0.0;
      for (std::size_t j = 0; j < H; ++j) s += hid[j] * w2.at(j, o);
      CHECK(got.at(b, o) == doctest::Approx(s).epsilon(1e-14));
    }
  }
}

TEST_CASE("two-layer MLP gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SplitMix64 rng(100 + seed);
    ParamSet p;
    p.add("w1", random_tensor({4, 6}, rng));
    p.add("b1", random_tensor({6}, rng));
    p.add("w2", random_tensor({3, 6}, rng));
    const Tensor x = random_tensor({5, 4}, rng);
    std::vector<std::size_t> targets(5);
    for (auto& t : targets) t = rng.below(3);
    const double err = fd_check_graph(
        [&](Graph& g, const ParamSet& ps) {
          const NodeId h = g.tanh(g.add(g.matmul(g.input(x), g.param(ps, "w1")), g.param(ps, "b1")));
          return g.cross_entropy(g.matmul(h, g.param(ps, "w2"), true), targets);
        },
        p);
    CHECK(err <= 1e-5);
  }
}

TEST_CASE("cross-entropy gradient is probabilities minus one-hot") {
  ParamSet p;
  p.add("z", Tensor::matrix(1, 4, {0.3, -1.2, 2.0, 0.5}));
  Graph g;
  const NodeId z = g.param(p, "z");
  const NodeId probs = g.softmax(z);
  const NodeId loss = g.cross_entropy(z, {2});
  const Tensor grad = g.backward(loss, p).at("z");
  for (std::size_t i = 0; i < 4; ++i) {
    const double expect = g.value(probs)[i] - (i == 2 ? 1.0 : 0.0);
    CHECK(grad[i] == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("op examples") {
  Graph g;
  const NodeId s = g.softmax(g.input(Tensor::vector({0, 0})));
  CHECK(g.value(s)[0] == 0.5);
  CHECK(g.value(s)[1] == 0.5);

  const Tensor table = Tensor::matrix(4, 2, {0, 1, 2, 3, 4, 5, 6, 7});
  const NodeId e = g.embedding(g.input(table), {3}, Shape{1});
  CHECK(g.value(e) == Tensor::matrix(1, 2, {6, 7}));

  for (std::size_t v : {2u, 5u, 64u}) {
    const NodeId ce = g.cross_entropy(g.input(Tensor(Shape{3, v}, 0.7)), {0, v - 1, v / 2});
    CHECK(g.value(ce).item() == doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-15));
  }
}

TEST_CASE("per-op vector-Jacobian products match finite differences") {
  // Each op is reduced to a scalar through a random weighting so every
  // output entry carries a distinct upstream gradient.
  auto weighted = [](Graph& g, NodeId y, std::uint64_t seed) {
    SplitMix64 r(seed);
    return g.sum(g.multiply(y, g.input(random_tensor(g.value(y).shape(), r))));
  };
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    CAPTURE(seed);
    SplitMix64 rng(seed * 31 + 7);
    const std::size_t m = 1 + rng.below(4), k = 1 + rng.below(4), n = 1 + rng.below(4);
    ParamSet p;
    p.add("a", random_tensor({m, k}, rng));
    p.add("b", random_tensor({k, n}, rng));
    p.add("bt", random_tensor({n, k}, rng));
    p.add("c", random_tensor({m, k}, rng));
    p.add("v", random_tensor({k}, rng));
    p.add("u", random_tensor({m}, rng));
    p.add("r", test::random_tensor_off_zero({m, k}, rng));
    p.add("t3", random_tensor({m, k, n}, rng));
    p.add("table", random_tensor({5, k}, rng));
    std::vector<std::size_t> ids(m * 2);
    for (auto& id : ids) id = rng.below(5);
    std::vector<std::size_t> targets(m);
    for (auto& t : targets) t = rng.below(k);

    SUBCASE("matmul") {
      CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) {
        return weighted(g, g.matmul(g.param(ps, "a"), g.param(ps, "b")), seed);
      }, p) <= 1e-5);
      CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) {
        return weighted(g, g.matmul(g.param(ps, "a"), g.param(ps, "bt"), true), seed);
      }, p) <= 1e-5);
      CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) {
        return weighted(g, g.matmul(g.param(ps, "a"), g.param(ps, "v")), seed);
      }, p) <= 1e-5);
      CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) {
        return weighted(g, g.matmul(g.param(ps, "u"), g.param(ps, "a")), seed);
      }, p) <= 1e-5);
    }
    SUBCASE("add and bias") {
      CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) {
        return weighted(g, g.add(g.param(ps, "a"), g.param(ps, "c")), seed);
      }, p) <= 1e-5);
      CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) {
        return weighted(g, g.add(g.param(ps, "a"), g.param(ps, "v")), seed);
      }, p) <= 1e-5);
    }
    SUBCASE("multiply, scale, sum") {
      CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) {
        return weighted(g, g.multiply(g.param(ps, "a"), g.param(ps, "c")), seed);
      }, p) <= 1e-5);
      CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) {
        const NodeId a = g.param(ps, "a");
        return weighted(g, g.multiply(a, a), seed);
      }, p) <= 1e-5);
      CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) {
        return weighted(g, g.scale(g.param(ps, "a"), -1.7), seed);
      }, p) <= 1e-5);
    }
    SUBCASE("tanh and relu") {
      CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) {
        return weighted(g, g.tanh(g.param(ps, "a")), seed);
      }, p) <= 1e-5);
      CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) {
        return weighted(g, g.relu(g.param(ps, "r")), seed);
      }, p) <= 1e-5);
    }
    SUBCASE("mean-pool over each axis") {
      for (std::size_t axis = 0; axis < 3; ++axis) {
        CAPTURE(axis);
        CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) {
          return weighted(g, g.mean_pool(g.param(ps, "t3"), axis), seed);
        }, p) <= 1e-5);
      }
    }
    SUBCASE("softmax") {
      CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) {
        return weighted(g, g.softmax(g.param(ps, "a")), seed);
      }, p) <= 1e-5);
    }
    SUBCASE("embedding lookup with repeated ids") {
      CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) {
        return weighted(g, g.embedding(g.param(ps, "table"), ids, Shape{m, 2}), seed);
      }, p) <= 1e-5);
    }
    SUBCASE("cross-entropy") {
      CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) {
        return g.cross_entropy(g.param(ps, "a"), targets);
      }, p) <= 1e-5);
    }
  }
}

TEST_CASE("CharLM gradient matches finite differences") {
  const CharLMSpec spec{.vocab_size = 7, .embed_dim = 4, .window = 3, .hidden = 5};
  const CharLM model(spec);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ParamSet p = model.init_params(seed);
    SplitMix64 rng(seed + 50);
    TaskBatch batch{.batch = 4, .window = 3, .inputs = {}, .targets = {}};
    for (std::size_t i = 0; i < 12; ++i) batch.inputs.push_back(rng.below(7));
    for (std::size_t i = 0; i < 4; ++i) batch.targets.push_back(rng.below(7));
    CHECK(fd_check_graph([&](Graph& g, const ParamSet& ps) { return model.forward(g, ps, batch).loss; }, p) <= 1e-5);
  }
}

TEST_CASE("softmax rows sum to one and ignore shifts") {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor z = random_tensor({3, 6}, rng, -20.0, 20.0);
    Tensor shifted = z;
    for (std::size_t r = 0; r < 3; ++r) {
      const double c = rng.uniform(-50.0, 50.0);
      for (auto& v : shifted.row(r)) v += c;
    }
    Graph g;
    const Tensor& a = g.value(g.softmax(g.input(z)));
    const Tensor& b = g.value(g.softmax(g.input(shifted)));
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (double v : a.row(r)) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    CHECK(test::max_abs_diff(a, b) <= 1e-12);
  }
}

TEST_CASE("forward and backward are bitwise deterministic") {
  const CharLM model(CharLMSpec{});
  const ParamSet p = model.init_params(9);
  SplitMix64 rng(1);
  TaskBatch batch{.batch = 8, .window = 8, .inputs = {}, .targets = {}};
  for (std::size_t i = 0; i < 64; ++i) batch.inputs.push_back(rng.below(64));
  for (std::size_t i = 0; i < 8; ++i) batch.targets.push_back(rng.below(64));
  Graph g1, g2;
  const auto f1 = model.forward(g1, p, batch);
  const auto f2 = model.forward(g2, p, batch);
  CHECK(g1.value(f1.logits) == g2.value(f2.logits));
  CHECK(g1.backward(f1.loss, p) == g2.backward(f2.loss, p));
}

TEST_CASE("parameters absent from the graph get zero gradients") {
  ParamSet p;
  p.add("used", Tensor::vector({1, 2}));
  p.add("unused", Tensor(Shape{2, 3}, 4.0));
  Graph g;
  const NodeId loss = g.sum(g.param(p, "used"));
  const GradMap grads = g.backward(loss, p);
  CHECK(grads.at("unused") == Tensor(Shape{2, 3}));
  CHECK(grads.at("used") == Tensor(Shape{2}, 1.0));
}

TEST_CASE("errors name the node and shapes") {
  Graph g;
  const NodeId a = g.input(Tensor(Shape{2, 3}));
  const NodeId b = g.input(Tensor(Shape{2, 3}));
  try {
    g.matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("node 2") != std::string::npos);
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("3") != std::string::npos);
  }
  CHECK_THROWS_AS(g.mean_pool(a, 2), ShapeError);
  CHECK_THROWS_AS(g.embedding(a, {2}, Shape{1}), ShapeError);
  CHECK_THROWS_AS(g.cross_entropy(a, {0}), ShapeError);
  CHECK_THROWS_AS(g.cross_entropy(a, {0, 3}), ShapeError);
  CHECK_THROWS_AS(g.add(a, g.input(Tensor(Shape{2}))), ShapeError);

  ParamSet p;
  p.add("x", Tensor(Shape{2}));
  Graph h;
  const NodeId x = h.param(p, "x");
  CHECK_THROWS_AS(h.backward(x, p), ShapeError);

  Graph big;
  const NodeId huge = big.input(Tensor::vector({1e200}));
  CHECK_THROWS_AS(big.multiply(huge, huge), NumericError);
}
