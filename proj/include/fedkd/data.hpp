#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "fedkd/matrix.hpp"
#include "fedkd/rng.hpp"

namespace fedkd {

struct Dataset {
  Matrix inputs;            // rows = samples
  std::vector<int> labels;  // one label per row, each < num_classes
  int num_classes = 0;

  std::size_t size() const { return inputs.rows(); }
  void validate() const;
};

// One client's local data. The unlabeled part carries inputs only; no label
// for those samples is stored anywhere reachable from this type.
struct ClientData {
  Dataset labeled;
  Matrix unlabeled;
};

struct PartitionPlan {
  std::vector<std::vector<int>> assignments;  // per-client sample indices
  double alpha = 0.0;
  std::uint64_t seed = 0;
};

// Extra data shared by every participant. labels is empty when the pool is
// unlabeled.
struct PublicPool {
  Matrix inputs;
  std::optional<std::vector<int>> labels;

  std::size_t size() const { return inputs.rows(); }
  bool labeled() const { return labels.has_value(); }
};

struct SyntheticConfig {
  int num_classes = 10;
  int input_dim = 16;
  int train_per_class = 300;
  int test_per_class = 200;
  double separation = 3.0;

  void validate() const;
};

struct SyntheticDataset {
  Dataset train;
  Dataset test;
  Matrix class_means;  // num_classes x input_dim
};

// C unit-covariance Gaussian clusters with means at pairwise distance
// >= separation. Means, train draws and test draws come from three
// derived streams of `seed`, so the test split never consumes train draws.
SyntheticDataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

// For each class, a Dirichlet(alpha) proportion vector over clients splits
// that class's (shuffled) samples by cumulative shares. Every sample is
// assigned exactly once; empty clients are permitted.
PartitionPlan dirichlet_partition(const Dataset& dataset, int n_clients, double alpha,
                                  std::uint64_t seed);

// Splits one client's samples; |unlabeled| = round(fraction * total), drawn
// after a seeded shuffle. Labels of the unlabeled part are dropped.
ClientData split_labeled_unlabeled(const Dataset& dataset, const std::vector<int>& sample_indices,
                                   double unlabeled_fraction, std::uint64_t seed);

// Carves `size` samples out of the dataset for the shared pool and returns
// the remaining indices, so later partitioning stays disjoint from the pool.
struct PoolSplit {
  PublicPool pool;
  std::vector<int> remaining_indices;
};
PoolSplit build_public_pool(const Dataset& dataset, std::size_t size, bool labeled,
                            std::uint64_t seed);

// Columnar text export: one sample per line, comma-separated features
// followed by the label, or "?" when labels are withheld.
void export_dataset(std::ostream& os, const Dataset& dataset);
void export_inputs(std::ostream& os, const Matrix& inputs);

}  // namespace fedkd
