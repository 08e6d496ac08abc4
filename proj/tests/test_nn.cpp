#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <vector>

#include "fedkd/nn.hpp"
#include "fedkd/rng.hpp"
#include "oracles.hpp"

using namespace fedkd;

namespace {

ParamVector random_params(const ModelSpec& spec, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  ParamVector p;
  p.values.resize(spec.param_count());
  for (double& v : p.values) v = rng.uniform(-scale, scale);
  return p;
}

Matrix random_batch(std::size_t rows, int dim, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, static_cast<std::size_t>(dim));
  for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

}  // namespace

TEST_CASE("param_count matches the hand-computed layout") {
  // 10*8 + 8 + 8*4 + 4 with scale 0.25 of hidden width 32
  ModelSpec spec{10, {32}, 4, 0.25};
  CHECK(spec.effective_hidden() == std::vector<int>{8});
  CHECK(spec.param_count() == 124);

  ModelSpec full{10, {32}, 4, 1.0};
  CHECK(full.effective_hidden() == std::vector<int>{32});
  CHECK(full.param_count() == 484);
}

TEST_CASE("scale 1.0 reproduces base widths and tiny scales floor at 1") {
  ModelSpec spec{5, {7, 13}, 3, 1.0};
  CHECK(spec.effective_hidden() == std::vector<int>{7, 13});
  ModelSpec tiny{5, {7, 13}, 3, 0.01};
  CHECK(tiny.effective_hidden() == std::vector<int>{1, 1});
}

TEST_CASE("param_count is monotone in scale") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    ModelSpec spec{1 + rng.uniform_int(20), {1 + rng.uniform_int(40), 1 + rng.uniform_int(40)},
                   2 + rng.uniform_int(8), 1.0};
    double a = 0.05 + 0.95 * rng.uniform();
    double b = 0.05 + 0.95 * rng.uniform();
    if (a > b) std::swap(a, b);
    ModelSpec low = spec;
    low.scale = a;
    ModelSpec high = spec;
    high.scale = b;
    CHECK(low.param_count() <= high.param_count());
  }
}

TEST_CASE("init_model is deterministic per (spec, seed) and seed-sensitive") {
  ModelSpec spec{10, {32}, 4, 0.25};
  const ParamVector a = init_model(spec, 42);
  const ParamVector b = init_model(spec, 42);
  CHECK(a.values == b.values);
  CHECK(a.size() == 124);

  const ParamVector c = init_model(spec, 43);
  CHECK(a.values != c.values);
}

TEST_CASE("init_model zeroes every bias slot") {
  ModelSpec spec{3, {4}, 2, 1.0};
  const ParamVector p = init_model(spec, 5);
  // layout: W0 (3x4), b0 (4), W1 (4x2), b1 (2)
  for (std::size_t i = 12; i < 16; ++i) CHECK(p[i] == 0.0);
  for (std::size_t i = 24; i < 26; ++i) CHECK(p[i] == 0.0);
}

TEST_CASE("forward of the zero network is zero") {
  ModelSpec spec{6, {5}, 3, 1.0};
  ParamVector zeros;
  zeros.values.assign(spec.param_count(), 0.0);
  const Matrix batch = random_batch(4, 6, 1);
  const Matrix logits = forward(spec, zeros, batch);
  REQUIRE(logits.rows() == 4);
  REQUIRE(logits.cols() == 3);
  for (double v : logits.data()) CHECK(v == 0.0);
}

TEST_CASE("single linear layer matches a hand matrix multiply") {
  // No hidden layer: logits = x W + b.
  ModelSpec spec{3, {}, 2, 1.0};
  REQUIRE(spec.param_count() == 8);
  ParamVector p;
  p.values = {1.0, -2.0,   // W row for x0
              0.5, 0.25,   // W row for x1
              -1.0, 3.0,   // W row for x2
              0.1, -0.2};  // b
  Matrix x(1, 3);
  x(0, 0) = 2.0;
  x(0, 1) = -4.0;
  x(0, 2) = 0.5;
  const Matrix logits = forward(spec, p, x);
  // Hand multiply: [2*1 - 4*0.5 + 0.5*(-1) + 0.1, 2*(-2) - 4*0.25 + 0.5*3 - 0.2]
  CHECK(logits(0, 0) == doctest::Approx(-0.4).epsilon(1e-12));
  CHECK(logits(0, 1) == doctest::Approx(-3.7).epsilon(1e-12));
}

TEST_CASE("forward keeps the batch row count") {
  ModelSpec spec{4, {6}, 5, 1.0};
  const ParamVector p = init_model(spec, 3);
  for (std::size_t k : {1, 2, 7}) {
    CHECK(forward(spec, p, random_batch(k, 4, k)).rows() == k);
  }
}

TEST_CASE("forward rejects dimension mismatches") {
  ModelSpec spec{4, {6}, 5, 1.0};
  const ParamVector p = init_model(spec, 3);
  CHECK_THROWS(forward(spec, p, random_batch(2, 3, 0)));
  ParamVector wrong;
  wrong.values.assign(spec.param_count() - 1, 0.0);
  CHECK_THROWS(forward(spec, wrong, random_batch(2, 4, 0)));
}

TEST_CASE("forward is batch-decomposable") {
  ModelSpec spec{5, {8, 6}, 4, 1.0};
  const ParamVector p = random_params(spec, 11);
  const Matrix batch = random_batch(6, 5, 12);
  const Matrix all = forward(spec, p, batch);
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    Matrix single(1, 5);
    for (std::size_t ccol = 0; ccol < 5; ++ccol) single(0, ccol) = batch(r, ccol);
    const Matrix row_logits = forward(spec, p, single);
    for (std::size_t ccol = 0; ccol < 4; ++ccol) {
      CHECK(std::fabs(row_logits(0, ccol) - all(r, ccol)) < 1e-12);
    }
  }
}

TEST_CASE("backward with zero output gradient is zero") {
  ModelSpec spec{4, {5}, 3, 1.0};
  const ParamVector p = random_params(spec, 21);
  const Matrix batch = random_batch(3, 4, 22);
  const Matrix zero(3, 3, 0.0);
  const Gradients g = backward(spec, p, batch, zero);
  for (double v : g.values) CHECK(v == 0.0);
}

TEST_CASE("backward is linear in the output gradient (stacked batches)") {
  ModelSpec spec{4, {5}, 3, 1.0};
  const ParamVector p = random_params(spec, 31);
  const Matrix batch = random_batch(2, 4, 32);
  Matrix dl(2, 3);
  Rng rng(33);
  for (double& v : dl.data()) v = rng.uniform(-1.0, 1.0);

  Matrix stacked_batch(4, 4);
  Matrix stacked_dl(4, 3);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      stacked_batch(r, c) = stacked_batch(r + 2, c) = batch(r, c);
    }
    for (std::size_t c = 0; c < 3; ++c) {
      stacked_dl(r, c) = stacked_dl(r + 2, c) = dl(r, c);
    }
  }
  const Gradients once = backward(spec, p, batch, dl);
  const Gradients twice = backward(spec, p, stacked_batch, stacked_dl);
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(std::fabs(twice.values[i] - 2.0 * once.values[i]) < 1e-9);
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  // 50 random small nets; scalar loss L = sum(dl .crit logits) with fixed dl,
  // so dL/dlogits = dl exactly and the finite differences probe backward().
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int input_dim = 2 + rng.uniform_int(6);
    const int hidden = 2 + rng.uniform_int(8);
    const int classes = 2 + rng.uniform_int(5);
    ModelSpec spec{input_dim, {hidden}, classes, 1.0};
    if (spec.param_count() > 500) continue;
    const ParamVector p = random_params(spec, 1000 + static_cast<std::uint64_t>(trial));
    const Matrix batch =
        random_batch(1 + static_cast<std::size_t>(rng.uniform_int(4)), input_dim,
                     2000 + static_cast<std::uint64_t>(trial));
    Matrix dl(batch.rows(), static_cast<std::size_t>(classes));
    for (double& v : dl.data()) v = rng.uniform(-1.0, 1.0);

    const Gradients analytic = backward(spec, p, batch, dl);
    const auto scalar_loss = [&](const std::vector<double>& values) {
      ParamVector probe;
      probe.values = values;
      const Matrix logits = forward(spec, probe, batch);
      double total = 0.0;
      for (std::size_t i = 0; i < logits.data().size(); ++i)
        total += logits.data()[i] * dl.data()[i];
      return total;
    };
    const auto fd = oracles::finite_difference(scalar_loss, p.values);
    CHECK(oracles::max_rel_err(analytic.values, fd) < 1e-4);
  }
}

TEST_CASE("sgd_step hand arithmetic") {
  ParamVector p;
  p.values = {1.0};
  Gradients g;
  g.values = {0.5};
  CHECK(sgd_step(p, g, 0.1, 0.0).values[0] == doctest::Approx(0.95).epsilon(1e-15));

  Gradients zero;
  zero.values = {0.0};
  CHECK(sgd_step(p, zero, 0.1, 0.0001).values[0] == doctest::Approx(0.99999).epsilon(1e-15));

  const ParamVector same = sgd_step(p, g, 0.0, 0.0);
  CHECK(same.values == p.values);
}

TEST_CASE("sgd_step rejects non-finite results and mismatched lengths") {
  ParamVector p;
  p.values = {1.0};
  Gradients g;
  g.values = {std::numeric_limits<double>::infinity()};
  CHECK_THROWS(sgd_step(p, g, 0.1, 0.0));
  Gradients two;
  two.values = {0.0, 0.0};
  CHECK_THROWS(sgd_step(p, two, 0.1, 0.0));
}

TEST_CASE("deterministic parameter trajectories") {
  ModelSpec spec{4, {6}, 3, 1.0};
  auto trajectory = [&](std::uint64_t seed) {
    Rng rng(seed);
    ParamVector p = init_model(spec, seed);
    for (int step = 0; step < 10; ++step) {
      const Matrix batch = random_batch(3, 4, seed + static_cast<std::uint64_t>(step));
      Matrix dl(3, 3);
      for (double& v : dl.data()) v = rng.uniform(-1.0, 1.0);
      p = sgd_step(p, backward(spec, p, batch, dl), 0.05, 1e-4);
    }
    return p;
  };
  CHECK(trajectory(5).values == trajectory(5).values);
}

TEST_CASE("lr schedule follows the milestone table") {
  LrSchedule sched;
  sched.base_lr = 0.2;
  sched.milestones = {{200, 0.02}, {300, 0.002}};
  sched.validate();
  CHECK(sched.lr_at(0) == 0.2);
  CHECK(sched.lr_at(199) == 0.2);
  CHECK(sched.lr_at(200) == 0.02);  // right-continuous
  CHECK(sched.lr_at(299) == 0.02);
  CHECK(sched.lr_at(300) == 0.002);
  CHECK(sched.lr_at(1000) == 0.002);

  LrSchedule bad;
  bad.base_lr = 0.1;
  bad.milestones = {{10, 0.01}, {10, 0.001}};
  CHECK_THROWS(bad.validate());
}
