#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "fedkd/losses.hpp"
#include "fedkd/rng.hpp"
#include "oracles.hpp"

using namespace fedkd;

TEST_CASE("softmax of equal logits is uniform at any temperature") {
  for (double t : {0.5, 1.0, 3.0, 100.0}) {
    const std::vector<double> logits(7, 2.5);
    const auto p = softmax_t(logits, t);
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 7).epsilon(1e-12));
  }
}

TEST_CASE("softmax matches the closed form e/(e+1)") {
  // [2, 0] at T=2 softens to [1, 0]: e/(e+1) = 0.731059...
  const auto p = softmax_t(std::vector<double>{2.0, 0.0}, 2.0);
  CHECK(p[0] == doctest::Approx(0.731059).epsilon(1e-5));
  CHECK(p[1] == doctest::Approx(0.268941).epsilon(1e-5));
}

TEST_CASE("softmax approaches uniform as T grows") {
  const std::vector<double> logits = {5.0, -3.0, 0.7, 2.2};
  const auto p = softmax_t(logits, 1e6);
  for (double v : p) CHECK(std::fabs(v - 0.25) < 1e-5);
}

TEST_CASE("softmax normalizes and shrugs off constant shifts") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 2 + rng.uniform_int(10);
    std::vector<double> logits(static_cast<std::size_t>(c));
    // scaled spread stays below ~36, where f64 softmax cannot saturate
    for (double& z : logits) z = rng.uniform(-8.0, 8.0);
    const double t = 0.5 + 4.5 * rng.uniform();
    const auto p = softmax_t(logits, t);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
      sum += v;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-9);

    const double shift = rng.uniform(-50.0, 50.0);
    std::vector<double> shifted = logits;
    for (double& z : shifted) z += shift;
    const auto q = softmax_t(shifted, t);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::fabs(p[i] - q[i]) < 1e-9);
  }
}

TEST_CASE("softmax rejects non-positive temperatures") {
  CHECK_THROWS(softmax_t(std::vector<double>{1.0, 2.0}, 0.0));
  CHECK_THROWS(softmax_t(std::vector<double>{1.0, 2.0}, -1.0));
}

TEST_CASE("cross entropy of a uniform prediction is ln C") {
  const std::vector<double> logits(10, 0.0);
  CHECK(cross_entropy(logits, 3) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy of a saturated correct prediction is tiny") {
  CHECK(cross_entropy(std::vector<double>{10.0, -10.0}, 0) < 1e-8);
}

TEST_CASE("cross entropy matches the calculator value") {
  CHECK(cross_entropy(std::vector<double>{1.0, 2.0, 3.0}, 2) ==
        doctest::Approx(0.407606).epsilon(1e-5));
}

TEST_CASE("cross entropy rejects out-of-range labels") {
  CHECK_THROWS(cross_entropy(std::vector<double>{1.0, 2.0}, 2));
  CHECK_THROWS(cross_entropy(std::vector<double>{1.0, 2.0}, -1));
}

TEST_CASE("batch cross entropy averages the per-row losses") {
  Matrix logits(2, 3);
  logits(0, 0) = 1.0;
  logits(0, 1) = 2.0;
  logits(0, 2) = 3.0;
  // uniform second row
  const std::vector<int> labels = {2, 0};
  const double expected = 0.5 * (0.4076059644443803 + std::log(3.0));
  CHECK(cross_entropy(logits, labels) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("kl divergence identities") {
  const std::vector<double> p = {0.2, 0.5, 0.3};
  CHECK(std::fabs(kl_div(p, p)) < 1e-12);

  // 0.5 ln 2 + 0.5 ln(2/3)
  CHECK(kl_div(std::vector<double>{0.5, 0.5}, std::vector<double>{0.25, 0.75}) ==
        doctest::Approx(0.143841).epsilon(1e-5));

  CHECK_THROWS(kl_div(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}));
}

TEST_CASE("kl divergence is non-negative over random pairs") {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const int c = 2 + rng.uniform_int(8);
    std::vector<double> a(static_cast<std::size_t>(c));
    std::vector<double> b(static_cast<std::size_t>(c));
    for (double& z : a) z = rng.uniform(-8.0, 8.0);
    for (double& z : b) z = rng.uniform(-8.0, 8.0);
    const auto t = softmax_t(a, 1.0);
    const auto s = softmax_t(b, 1.0);
    CHECK(kl_div(t, s) >= -1e-12);
  }
}

TEST_CASE("distill loss is zero with matching logits") {
  DistillConfig cfg;
  cfg.temperature = 3.0;
  const std::vector<double> z = {1.0, -2.0, 0.5};
  const auto r = distill_loss(z, z, cfg);
  CHECK(std::fabs(r.loss) < 1e-12);
  for (double g : r.grad) CHECK(std::fabs(g) < 1e-12);
}

TEST_CASE("distill gradient matches finite differences") {
  Rng rng(23);
  DistillConfig cfg;
  cfg.temperature = 3.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> teacher(5);
    std::vector<double> student(5);
    for (double& z : teacher) z = rng.uniform(-4.0, 4.0);
    for (double& z : student) z = rng.uniform(-4.0, 4.0);
    cfg.apply_t_squared = trial % 2 == 0;

    const auto analytic = distill_loss(teacher, student, cfg);
    const auto loss_of = [&](const std::vector<double>& s) {
      return distill_loss(teacher, s, cfg).loss;
    };
    const auto fd = oracles::finite_difference(loss_of, student, 1e-6);
    CHECK(oracles::max_rel_err(analytic.grad, fd) < 1e-5);
  }
}

TEST_CASE("T squared flag scales the loss by exactly T^2") {
  DistillConfig on;
  on.temperature = 3.0;
  on.apply_t_squared = true;
  DistillConfig off = on;
  off.apply_t_squared = false;
  const std::vector<double> teacher = {2.0, -1.0, 0.0, 1.5};
  const std::vector<double> student = {-0.5, 1.0, 2.0, 0.0};
  const double with = distill_loss(teacher, student, on).loss;
  const double without = distill_loss(teacher, student, off).loss;
  CHECK(with == 9.0 * without);
}

TEST_CASE("batch distill loss averages rows and scales the gradient") {
  DistillConfig cfg;
  cfg.temperature = 2.0;
  Matrix teacher(2, 3);
  Matrix student(2, 3);
  Rng rng(31);
  for (double& v : teacher.data()) v = rng.uniform(-2.0, 2.0);
  for (double& v : student.data()) v = rng.uniform(-2.0, 2.0);
  const auto batch = distill_loss(teacher, student, cfg);
  const auto row0 = distill_loss(teacher.row(0), student.row(0), cfg);
  const auto row1 = distill_loss(teacher.row(1), student.row(1), cfg);
  CHECK(batch.loss == doctest::Approx(0.5 * (row0.loss + row1.loss)).epsilon(1e-12));
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(batch.grad(0, c) == doctest::Approx(0.5 * row0.grad[c]).epsilon(1e-12));
    CHECK(batch.grad(1, c) == doctest::Approx(0.5 * row1.grad[c]).epsilon(1e-12));
  }
}

TEST_CASE("combined step loss") {
  CHECK(combined_step_loss(1.0, 0.2, 0.5) == doctest::Approx(1.1).epsilon(1e-15));
  CHECK(combined_step_loss(1.7, 123.0, 0.0) == 1.7);
  CHECK(combined_step_loss(0.0, 0.0, 0.3) == 0.0);
  CHECK_THROWS(combined_step_loss(1.0, 1.0, -0.1));
}

TEST_CASE("lambda ramps linearly to lambda_max at the threshold") {
  DistillConfig cfg;
  cfg.lambda_max = 0.5;
  cfg.ramp_threshold_epoch = 300;
  CHECK(lambda_at(0, cfg) == 0.0);
  CHECK(lambda_at(150, cfg) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(lambda_at(300, cfg) == 0.5);
  CHECK(lambda_at(400, cfg) == 0.5);

  DistillConfig flat = cfg;
  flat.ramp_threshold_epoch = 0;
  CHECK(lambda_at(0, flat) == 0.5);
  CHECK(lambda_at(99, flat) == 0.5);
}

TEST_CASE("lambda is non-decreasing and bounded") {
  DistillConfig cfg;
  cfg.lambda_max = 0.7;
  cfg.ramp_threshold_epoch = 37;
  double prev = -1.0;
  for (int epoch = 0; epoch < 120; ++epoch) {
    const double l = lambda_at(epoch, cfg);
    CHECK(l >= prev);
    CHECK(l <= 0.7);
    prev = l;
  }
}
