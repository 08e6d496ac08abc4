#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fedkd/data.hpp"
#include "oracles.hpp"

using namespace fedkd;

namespace {

SyntheticConfig small_cfg() {
  SyntheticConfig cfg;
  cfg.num_classes = 4;
  cfg.input_dim = 6;
  cfg.train_per_class = 250;
  cfg.test_per_class = 50;
  cfg.separation = 4.0;
  return cfg;
}

}  // namespace

TEST_CASE("synthetic dataset has the requested shape and class balance") {
  const auto synth = generate_synthetic(small_cfg(), 7);
  CHECK(synth.train.size() == 1000);
  CHECK(synth.test.size() == 200);
  std::vector<int> counts(4, 0);
  for (int y : synth.train.labels) counts[static_cast<std::size_t>(y)] += 1;
  for (int c : counts) CHECK(c == 250);
  synth.train.validate();
  synth.test.validate();
}

TEST_CASE("synthetic generation is deterministic per seed") {
  const auto a = generate_synthetic(small_cfg(), 19);
  const auto b = generate_synthetic(small_cfg(), 19);
  CHECK(a.train.inputs == b.train.inputs);
  CHECK(a.train.labels == b.train.labels);
  CHECK(a.test.inputs == b.test.inputs);
  CHECK(a.class_means == b.class_means);

  const auto c = generate_synthetic(small_cfg(), 20);
  CHECK(!(a.train.inputs == c.train.inputs));
}

TEST_CASE("cluster means respect the separation floor") {
  auto cfg = small_cfg();
  cfg.num_classes = 10;
  cfg.separation = 5.0;
  const auto synth = generate_synthetic(cfg, 3);
  for (int a = 0; a < cfg.num_classes; ++a) {
    for (int b = a + 1; b < cfg.num_classes; ++b) {
      double dist2 = 0.0;
      for (int d = 0; d < cfg.input_dim; ++d) {
        const double diff = synth.class_means(static_cast<std::size_t>(a), static_cast<std::size_t>(d)) -
                            synth.class_means(static_cast<std::size_t>(b), static_cast<std::size_t>(d));
        dist2 += diff * diff;
      }
      CHECK(std::sqrt(dist2) >= cfg.separation);
    }
  }
}

TEST_CASE("well-separated clusters are learnable by a nearest-centroid oracle") {
  SyntheticConfig cfg;
  cfg.num_classes = 10;
  cfg.input_dim = 10;
  cfg.train_per_class = 100;
  cfg.test_per_class = 100;
  cfg.separation = 10.0;
  const auto synth = generate_synthetic(cfg, 11);
  const double acc = oracles::nearest_centroid_accuracy(
      synth.train.inputs, synth.train.labels, cfg.num_classes, synth.test.inputs,
      synth.test.labels);
  CHECK(acc > 0.95);
}

TEST_CASE("single-client partition takes everything") {
  const auto synth = generate_synthetic(small_cfg(), 23);
  const auto plan = dirichlet_partition(synth.train, 1, 0.5, 29);
  REQUIRE(plan.assignments.size() == 1);
  CHECK(plan.assignments[0].size() == synth.train.size());
}

TEST_CASE("partition assigns every sample exactly once") {
  const auto synth = generate_synthetic(small_cfg(), 31);
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    for (double alpha : {0.1, 1.0, 100.0}) {
      const auto plan = dirichlet_partition(synth.train, 17, alpha, seed);
      std::vector<int> all;
      for (const auto& a : plan.assignments) all.insert(all.end(), a.begin(), a.end());
      CHECK(all.size() == synth.train.size());
      std::sort(all.begin(), all.end());
      std::vector<int> expected(synth.train.size());
      std::iota(expected.begin(), expected.end(), 0);
      CHECK(all == expected);
    }
  }
}

TEST_CASE("partition is reproducible per seed") {
  const auto synth = generate_synthetic(small_cfg(), 37);
  const auto a = dirichlet_partition(synth.train, 10, 0.1, 41);
  const auto b = dirichlet_partition(synth.train, 10, 0.1, 41);
  CHECK(a.assignments == b.assignments);
}

TEST_CASE("small alpha concentrates classes within clients") {
  // Monte-Carlo oracle over the Dirichlet sampler: mean per-client max-class
  // share must be strictly larger at alpha=0.1 than at alpha=100.
  SyntheticConfig cfg;
  cfg.num_classes = 10;
  cfg.input_dim = 2;
  cfg.train_per_class = 100;
  cfg.test_per_class = 1;
  cfg.separation = 1.0;
  const auto synth = generate_synthetic(cfg, 43);

  auto mean_max_share = [&](double alpha, std::uint64_t seed) {
    const auto plan = dirichlet_partition(synth.train, 100, alpha, seed);
    double total = 0.0;
    int populated = 0;
    for (const auto& assignment : plan.assignments) {
      if (assignment.empty()) continue;
      std::vector<int> counts(static_cast<std::size_t>(cfg.num_classes), 0);
      for (int idx : assignment)
        counts[static_cast<std::size_t>(synth.train.labels[static_cast<std::size_t>(idx)])] += 1;
      const int max_count = *std::max_element(counts.begin(), counts.end());
      total += static_cast<double>(max_count) / static_cast<double>(assignment.size());
      populated += 1;
    }
    return total / populated;
  };

  double skewed = 0.0;
  double uniform = 0.0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    skewed += mean_max_share(0.1, 1000 + seed);
    uniform += mean_max_share(100.0, 1000 + seed);
  }
  skewed /= 30.0;
  uniform /= 30.0;
  CHECK(skewed > uniform);
  // the gap is large, not marginal
  CHECK(skewed - uniform > 0.2);
}

TEST_CASE("labeled/unlabeled split honors the fraction") {
  const auto synth = generate_synthetic(small_cfg(), 47);
  std::vector<int> indices(40);
  std::iota(indices.begin(), indices.end(), 0);

  const auto none = split_labeled_unlabeled(synth.train, indices, 0.0, 1);
  CHECK(none.labeled.size() == 40);
  CHECK(none.unlabeled.rows() == 0);

  const auto half = split_labeled_unlabeled(synth.train, indices, 0.5, 1);
  CHECK(half.labeled.size() == 20);
  CHECK(half.unlabeled.rows() == 20);

  const auto all = split_labeled_unlabeled(synth.train, indices, 1.0, 1);
  CHECK(all.labeled.size() == 0);
  CHECK(all.unlabeled.rows() == 40);
}

TEST_CASE("splits are reproducible and disjoint") {
  const auto synth = generate_synthetic(small_cfg(), 53);
  std::vector<int> indices;
  for (int i = 5; i < 45; ++i) indices.push_back(i);
  const auto a = split_labeled_unlabeled(synth.train, indices, 0.4, 9);
  const auto b = split_labeled_unlabeled(synth.train, indices, 0.4, 9);
  CHECK(a.labeled.inputs == b.labeled.inputs);
  CHECK(a.labeled.labels == b.labeled.labels);
  CHECK(a.unlabeled == b.unlabeled);
  CHECK(a.labeled.size() + a.unlabeled.rows() == indices.size());
}

TEST_CASE("public pool is disjoint from the remaining samples") {
  const auto synth = generate_synthetic(small_cfg(), 59);
  const auto split = build_public_pool(synth.train, 100, false, 61);
  CHECK(split.pool.size() == 100);
  CHECK(!split.pool.labeled());
  CHECK(split.remaining_indices.size() == synth.train.size() - 100);

  // remaining indices are unique; together with the pool they cover the set
  std::vector<int> rem = split.remaining_indices;
  std::sort(rem.begin(), rem.end());
  CHECK(std::adjacent_find(rem.begin(), rem.end()) == rem.end());

  const auto labeled_split = build_public_pool(synth.train, 50, true, 67);
  REQUIRE(labeled_split.pool.labeled());
  CHECK(labeled_split.pool.labels->size() == 50);

  const auto empty = build_public_pool(synth.train, 0, false, 71);
  CHECK(empty.pool.size() == 0);
  CHECK(empty.remaining_indices.size() == synth.train.size());

  CHECK_THROWS(build_public_pool(synth.train, synth.train.size() + 1, false, 73));
}

TEST_CASE("export writes one sample per line with ? for withheld labels") {
  auto cfg = small_cfg();
  cfg.train_per_class = 3;
  cfg.test_per_class = 1;
  const auto synth = generate_synthetic(cfg, 79);

  std::ostringstream labeled;
  export_dataset(labeled, synth.train);
  std::istringstream lines(labeled.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    ++count;
    const auto last_comma = line.rfind(',');
    REQUIRE(last_comma != std::string::npos);
    const std::string label = line.substr(last_comma + 1);
    CHECK(label != "?");
    CHECK(std::stoi(label) < 4);
  }
  CHECK(count == 12);

  std::ostringstream unlabeled;
  export_inputs(unlabeled, synth.test.inputs);
  std::istringstream ulines(unlabeled.str());
  while (std::getline(ulines, line)) {
    CHECK(line.substr(line.rfind(',') + 1) == "?");
  }
}
