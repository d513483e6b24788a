#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cegm/error.hpp"
#include "cegm/models.hpp"
#include "cegm/optimizer.hpp"
#include "cegm/tasks.hpp"
#include "support.hpp"

using namespace cegm;

namespace {

ParamSet single(const char* name, Tensor t, Role role = Role::kGeneric) {
  ParamSet p;
  p.add(name, std::move(t), role);
  return p;
}

GradMap grad_of(const char* name, Tensor t) {
  GradMap g;
  g.insert(name, std::move(t));
  return g;
}

const ContextBatch kUnitContext(Tensor::matrix(1, 1, {1.0}));

CEGMConfig reduction_config(NormMode mode) {
  CEGMConfig c;
  c.eta = 0.05;
  c.mu = 0.0;
  c.lambda0 = 1.0;
  c.lambda_min = 0.5;
  c.lambda_max = 1.0;
  c.delta_lambda = 0.0;
  c.norm_mode = mode;
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(CEGMConfig{}.validate());
  CEGMConfig c;
  c.eta = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.lambda_min = 0.9;
  c.lambda_max = 0.8;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.mu = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.lambda0 = 0.01;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_norm_mode("l2"), ConfigError);
  CHECK(parse_norm_mode("preserve") == NormMode::kPreserve);
}

TEST_CASE("ema_update examples") {
  const ParamSet p = single("w", Tensor::vector({0}));
  EntangledState s = EntangledState::init(p, CEGMConfig{});
  s.ema.at("w") = Tensor::vector({7});

  s.lambda = 1.0;
  CHECK(ema_update(s, grad_of("w", Tensor::vector({4}))).ema.at("w") == Tensor::vector({4}));
  s.lambda = 0.0;
  CHECK(ema_update(s, grad_of("w", Tensor::vector({4}))).ema.at("w") == Tensor::vector({7}));
  s.lambda = 0.25;
  s.ema.at("w") = Tensor::vector({0});
  CHECK(ema_update(s, grad_of("w", Tensor::vector({4}))).ema.at("w") == Tensor::vector({1}));

  try {
    ema_update(s, grad_of("w", Tensor::vector({1, 2})));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("'w'") != std::string::npos);
  }
}

TEST_CASE("entangle examples") {
  const std::vector<double> c{2.0, 0.0};
  const Tensor par = Tensor::matrix(1, 2, {-3.0, 0.0});
  for (double mu : {0.0, 0.3, 1.0}) CHECK(test::max_abs_diff(entangle(par, c, mu, Role::kEmbeddingAligned), par) <= 1e-12);

  const Tensor orth = Tensor::matrix(1, 2, {0.0, 5.0});
  CHECK(entangle(orth, c, 1.0, Role::kEmbeddingAligned) == Tensor::matrix(1, 2, {0.0, 0.0}));

  const Tensor g = Tensor::vector({1, 1});
  const std::vector<double> chat{1, 0};
  CHECK(entangle(g, chat, 0.5, Role::kEmbeddingAligned) == Tensor::vector({1, 0.5}));

  const std::vector<double> zero{0, 0};
  CHECK(entangle(g, zero, 0.5, Role::kEmbeddingAligned) == g);
  CHECK_THROWS_AS(entangle(g, std::vector<double>{1, 0, 0}, 0.5, Role::kEmbeddingAligned), ShapeError);
}

TEST_CASE("entangle leaves generic tensors bitwise unchanged") {
  SplitMix64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor t = test::random_tensor({1 + rng.below(4), 1 + rng.below(5)}, rng);
    const Tensor c = test::random_tensor({1 + rng.below(6)}, rng);
    CHECK(entangle(t, c.data(), rng.uniform(), Role::kGeneric) == t);
  }
}

TEST_CASE("normalize_update examples") {
  const Tensor e = Tensor::vector({3, 4});
  const auto u = normalize_update(e, e, NormMode::kUnit, 1e-12);
  CHECK(u.update[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(u.update[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK_FALSE(u.degenerate);

  const Tensor raw = Tensor::vector({0.1, -7.0});
  CHECK(std::abs(normalize_update(e, raw, NormMode::kPreserve, 1e-12).update.frobenius_norm() -
                 raw.frobenius_norm()) <= 1e-12);

  const Tensor z(Shape{2});
  const auto d = normalize_update(z, raw, NormMode::kUnit, 1e-12);
  CHECK(d.degenerate);
  CHECK(d.update == z);
  CHECK(normalize_update(z, raw, NormMode::kPreserve, 1e-12).update == z);
  CHECK_THROWS_AS(normalize_update(e, Tensor::vector({1}), NormMode::kUnit, 1e-12), ShapeError);
}

TEST_CASE("adjust_lambda examples") {
  CEGMConfig cfg;
  EntangledState s;
  s.lambda = 0.5;
  EntangledState first = adjust_lambda(s, 3.0, cfg);
  CHECK(first.lambda == 0.5);
  CHECK(first.prev_loss == 3.0);

  s.prev_loss = 2.0;
  CHECK(adjust_lambda(s, 1.0, cfg).lambda == doctest::Approx(0.505).epsilon(1e-15));

  s.lambda = cfg.lambda_max;
  CHECK(adjust_lambda(s, 0.1, cfg).lambda == cfg.lambda_max);
  s.lambda = cfg.lambda_min;
  CHECK(adjust_lambda(s, 50.0, cfg).lambda == cfg.lambda_min);

  CHECK_THROWS_AS(adjust_lambda(s, std::nan(""), cfg), NumericError);
  CHECK_THROWS_AS(adjust_lambda(s, INFINITY, cfg), NumericError);
}

TEST_CASE("lambda stays clamped under random loss sequences") {
  SplitMix64 rng(21);
  for (int run = 0; run < 20; ++run) {
    CEGMConfig cfg;
    cfg.delta_lambda = rng.uniform(0.0, 0.5);
    EntangledState s;
    s.lambda = cfg.lambda0;
    for (int i = 0; i < 1000; ++i) {
      const double loss = std::exp(rng.uniform(-10.0, 10.0)) * (rng.below(10) == 0 ? -1.0 : 1.0);
      s = adjust_lambda(s, loss, cfg);
      REQUIRE(s.lambda >= cfg.lambda_min);
      REQUIRE(s.lambda <= cfg.lambda_max);
    }
  }
}

TEST_CASE("one unit step has length eta") {
  CEGMConfig cfg;
  cfg.eta = 0.05;
  ParamSet p = single("theta", Tensor::vector({3, -2}));
  EntangledState s = EntangledState::init(p, cfg);
  const Tensor before = p.value("theta");
  // L = |theta|^2, gradient 2 theta.
  Tensor g = before;
  for (auto& v : g.data()) v *= 2.0;
  const StepRecord rec = cegm_step(p, grad_of("theta", g), kUnitContext, s, cfg, 13.0);
  Tensor diff = p.value("theta");
  for (std::size_t i = 0; i < 2; ++i) diff[i] -= before[i];
  CHECK(std::abs(diff.frobenius_norm() - cfg.eta) <= 1e-12);
  CHECK(rec.step == 1);
  CHECK(s.step == 1);
  CHECK(rec.lambda_used == cfg.lambda0);
}

TEST_CASE("quadratic trajectory matches a straight-line reference") {
  CEGMConfig cfg;
  cfg.eta = 0.05;
  ParamSet p = single("theta", Tensor::vector({3, -2}));
  EntangledState s = EntangledState::init(p, cfg);

  double th[2] = {3, -2}, ema[2] = {0, 0}, lambda = cfg.lambda0;
  bool have_prev = false;
  double prev = 0.0, best = INFINITY;
  for (int t = 0; t < 200; ++t) {
    const double loss = th[0] * th[0] + th[1] * th[1];
    best = std::min(best, loss);
    const double g[2] = {2 * th[0], 2 * th[1]};
    for (int i = 0; i < 2; ++i) ema[i] = lambda * g[i] + (1 - lambda) * ema[i];
    const double n = std::sqrt(ema[0] * ema[0] + ema[1] * ema[1]);
    for (int i = 0; i < 2; ++i) th[i] -= cfg.eta * (ema[i] / n);
    if (have_prev) {
      const double gl = std::clamp((prev - loss) / std::max(std::abs(prev), 1e-8), -1.0, 1.0);
      lambda = std::clamp(lambda + cfg.delta_lambda * gl, cfg.lambda_min, cfg.lambda_max);
    }
    prev = loss;
    have_prev = true;

    Tensor grad = p.value("theta");
    for (auto& v : grad.data()) v *= 2.0;
    const double l = p.value("theta").frobenius_norm();
    cegm_step(p, grad_of("theta", grad), kUnitContext, s, cfg, l * l);
    REQUIRE(std::abs(p.value("theta")[0] - th[0]) <= 1e-12);
    REQUIRE(std::abs(p.value("theta")[1] - th[1]) <= 1e-12);
    REQUIRE(std::abs(s.lambda - lambda) <= 1e-12);
  }
  CHECK(best < 1e-3);
}

TEST_CASE("reduction to sgd on a quadratic") {
  const QuadraticTask task = quadratic_task(5, 10.0, 3);
  SplitMix64 rng(3);
  ParamSet a = single("theta", test::random_tensor({5}, rng));
  ParamSet b = a;
  const CEGMConfig cfg = reduction_config(NormMode::kPreserve);
  EntangledState s = EntangledState::init(a, cfg);
  for (int t = 0; t < 100; ++t) {
    cegm_step(a, grad_of("theta", task.grad(a.value("theta"))), kUnitContext, s, cfg, task.loss(a.value("theta")));
    sgd_step(b, grad_of("theta", task.grad(b.value("theta"))), cfg.eta);
    REQUIRE(test::max_abs_diff(a.value("theta"), b.value("theta")) <= 1e-12);
  }
}

TEST_CASE("normgd equals cegm with mu=0, lambda=1, unit mode") {
  const CharLM model(CharLMSpec{.vocab_size = 10, .embed_dim = 4, .window = 3, .hidden = 4});
  ParamSet a = model.init_params(4);
  ParamSet b = a;
  const CEGMConfig cfg = reduction_config(NormMode::kUnit);
  EntangledState s = EntangledState::init(a, cfg);
  SplitMix64 rng(6);
  for (int t = 0; t < 50; ++t) {
    TaskBatch batch{.batch = 6, .window = 3, .inputs = {}, .targets = {}};
    for (int i = 0; i < 18; ++i) batch.inputs.push_back(rng.below(10));
    for (int i = 0; i < 6; ++i) batch.targets.push_back(rng.below(10));
    Graph ga, gb;
    const auto fa = model.forward(ga, a, batch);
    const auto fb = model.forward(gb, b, batch);
    cegm_step(a, ga.backward(fa.loss, a), CharLM::context_for(a, batch), s, cfg, ga.value(fa.loss).item());
    normgd_step(b, gb.backward(fb.loss, b), cfg.eta);
    for (const auto& e : a) REQUIRE(test::max_abs_diff(e.value, b.value(e.name)) <= 1e-12);
  }
}

TEST_CASE("unit-mode updates have unit norm per tensor") {
  const CharLM model(CharLMSpec{.vocab_size = 12, .embed_dim = 6, .window = 4, .hidden = 6});
  ParamSet p = model.init_params(2);
  CEGMConfig cfg;
  cfg.eta = 0.1;
  EntangledState s = EntangledState::init(p, cfg);
  SplitMix64 rng(9);
  std::size_t checked = 0;
  for (int t = 0; t < 60; ++t) {
    TaskBatch batch{.batch = 5, .window = 4, .inputs = {}, .targets = {}};
    for (int i = 0; i < 20; ++i) batch.inputs.push_back(rng.below(12));
    for (int i = 0; i < 5; ++i) batch.targets.push_back(rng.below(12));
    Graph g;
    const auto f = model.forward(g, p, batch);
    const ParamSet before = p;
    const StepRecord rec = cegm_step(p, g.backward(f.loss, p), CharLM::context_for(p, batch), s, cfg, g.value(f.loss).item());
    for (const auto& info : rec.tensors) {
      if (info.degenerate) continue;
      CHECK(std::abs(info.update_norm - 1.0) <= 1e-9);
      Tensor diff = p.value(info.name);
      const Tensor& old = before.value(info.name);
      for (std::size_t i = 0; i < diff.numel(); ++i) diff[i] = (old[i] - diff[i]) / cfg.eta;
      CHECK(std::abs(diff.frobenius_norm() - 1.0) <= 1e-9);
      ++checked;
    }
  }
  CHECK(checked == 60 * 5);
}

TEST_CASE("degenerate step is flagged, not an error") {
  CEGMConfig cfg;
  cfg.mu = 1.0;
  cfg.lambda0 = 0.95;
  ParamSet p = single("emb", Tensor::matrix(1, 2, {0.0, 1.0}), Role::kEmbeddingAligned);
  EntangledState s = EntangledState::init(p, cfg);
  s.lambda = 1.0;
  const ContextBatch ctx(Tensor::matrix(1, 2, {1.0, 0.0}));
  const StepRecord rec = cegm_step(p, grad_of("emb", Tensor::matrix(1, 2, {0.0, 3.0})), ctx, s, cfg, 1.0);
  CHECK(rec.degenerate());
  CHECK(p.value("emb") == Tensor::matrix(1, 2, {0.0, 1.0}));
}

TEST_CASE("failed steps leave params and state untouched") {
  const CharLM model(CharLMSpec{.vocab_size = 8, .embed_dim = 4, .window = 2, .hidden = 3});
  const ParamSet init = model.init_params(1);
  CEGMConfig cfg;
  TaskBatch batch{.batch = 2, .window = 2, .inputs = {1, 2, 3, 4}, .targets = {5, 6}};
  Graph g;
  const auto f = model.forward(g, init, batch);
  const GradMap good = g.backward(f.loss, init);
  const ContextBatch ctx = CharLM::context_for(init, batch);

  ParamSet p = init;
  EntangledState s = EntangledState::init(p, cfg);
  cegm_step(p, good, ctx, s, cfg, 2.0);  // non-trivial state before the failures
  const ParamSet p0 = p;
  const EntangledState s0 = s;

  auto expect_untouched = [&](auto&& fn) {
    CHECK_THROWS_AS(fn(), Error);
    CHECK(p == p0);
    CHECK(s == s0);
  };

  GradMap bad_shape;
  for (const auto& [name, t] : good) bad_shape.insert(name, name == "output.bias" ? Tensor(Shape{3}) : t);
  expect_untouched([&] { cegm_step(p, bad_shape, ctx, s, cfg, 1.0); });

  GradMap missing;
  for (const auto& [name, t] : good)
    if (name != "hidden.weight") missing.insert(name, t);
  expect_untouched([&] { cegm_step(p, missing, ctx, s, cfg, 1.0); });

  const ContextBatch wrong_dim(Tensor::matrix(1, 3, {1, 2, 3}));
  expect_untouched([&] { cegm_step(p, good, wrong_dim, s, cfg, 1.0); });

  expect_untouched([&] { cegm_step(p, good, ctx, s, cfg, std::nan("")); });

  GradMap blowup;
  for (const auto& [name, t] : good) {
    Tensor v = t;
    if (name == "output.bias") v[0] = INFINITY;
    blowup.insert(name, v);
  }
  expect_untouched([&] { cegm_step(p, blowup, ctx, s, cfg, 1.0); });
}

TEST_CASE("baseline examples") {
  ParamSet p = single("x", Tensor::scalar(5.0));
  sgd_step(p, grad_of("x", Tensor::scalar(2.0)), 0.1);
  CHECK(p.value("x").item() == doctest::Approx(4.8).epsilon(1e-15));

  for (double scale : {1e-4, 1.0, 1e4}) {
    ParamSet q = single("x", Tensor::vector({1.0, -1.0}));
    AdamState st = AdamState::init(q);
    const AdamConfig cfg;
    adam_step(q, grad_of("x", Tensor::vector({scale, -3 * scale})), st, cfg);
    CHECK(std::abs(1.0 - q.value("x")[0]) == doctest::Approx(cfg.eta).epsilon(1e-3));
    CHECK(std::abs(-1.0 - q.value("x")[1]) == doctest::Approx(cfg.eta).epsilon(1e-3));
    CHECK(st.t == 1);
  }

  ParamSet r = single("x", Tensor::vector({0, 0}));
  normgd_step(r, grad_of("x", Tensor::vector({3, 4})), 0.5);
  CHECK(r.value("x")[0] == doctest::Approx(-0.3).epsilon(1e-15));
  CHECK(r.value("x")[1] == doctest::Approx(-0.4).epsilon(1e-15));
  CHECK_THROWS_AS(sgd_step(r, grad_of("x", Tensor::vector({1})), 0.1), ShapeError);
}

TEST_CASE("optimizer snapshot restores an identical continuation") {
  const QuadraticTask task = quadratic_task(3, 5.0, 2);
  for (OptimizerKind kind : {OptimizerKind::kCegm, OptimizerKind::kSgd, OptimizerKind::kAdam, OptimizerKind::kNormGd}) {
    CAPTURE(optimizer_name(kind));
    CEGMConfig cfg;
    cfg.eta = 0.05;
    ParamSet p = single("theta", Tensor::vector({1, -2, 0.5}));
    const ContextBatch ctx(Tensor::matrix(1, 3, {0.2, 0.1, 0.4}));
    Optimizer opt(kind, cfg, p);
    auto run = [&](ParamSet& ps, Optimizer& o, int n) {
      for (int i = 0; i < n; ++i) o.step(ps, grad_of("theta", task.grad(ps.value("theta"))), ctx, task.loss(ps.value("theta")));
    };
    run(p, opt, 7);
    const OptimizerSnapshot snap = opt.snapshot();
    ParamSet q = p;
    Optimizer other(kind, cfg, q);
    other.restore(snap, q);
    CHECK(other.snapshot() == snap);
    run(p, opt, 9);
    run(q, other, 9);
    CHECK(p == q);
    CHECK(opt.snapshot() == other.snapshot());

    OptimizerSnapshot wrong = snap;
    wrong.kind = kind == OptimizerKind::kSgd ? OptimizerKind::kAdam : OptimizerKind::kSgd;
    CHECK_THROWS_AS(other.restore(wrong, q), FormatError);
  }
}

TEST_CASE("identical inputs give bitwise-identical trajectories") {
  auto run = [] {
    const CharLM model(CharLMSpec{.vocab_size = 16, .embed_dim = 8, .window = 4, .hidden = 8});
    ParamSet p = model.init_params(77);
    CEGMConfig cfg;
    Optimizer opt(OptimizerKind::kCegm, cfg, p);
    const auto batches = make_copy_task(8, 16, 10, 8, 5);
    for (const auto& b : batches) {
      TaskBatch w = b;
      w.window = 4;
      w.inputs.clear();
      for (std::size_t i = 0; i < b.batch; ++i)
        for (std::size_t j = 0; j < 4; ++j) w.inputs.push_back(b.input_row(i)[j]);
      Graph g;
      const auto f = model.forward(g, p, w);
      opt.step(p, g.backward(f.loss, p), CharLM::context_for(p, w), g.value(f.loss).item());
    }
    return std::make_pair(p, opt.snapshot());
  };
  CHECK(run() == run());
}
