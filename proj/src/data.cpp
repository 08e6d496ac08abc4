#include "fedkd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace fedkd {

void Dataset::validate() const {
  if (inputs.rows() != labels.size())
    throw std::invalid_argument("Dataset: row count does not match label count");
  for (int y : labels) {
    if (y < 0 || y >= num_classes)
      throw std::invalid_argument("Dataset: label " + std::to_string(y) +
                                  " out of range for " + std::to_string(num_classes) +
                                  " classes");
  }
}

void SyntheticConfig::validate() const {
  if (num_classes < 1) throw std::invalid_argument("SyntheticConfig num_classes must be >= 1");
  if (input_dim < 1) throw std::invalid_argument("SyntheticConfig input_dim must be >= 1");
  if (train_per_class < 1)
    throw std::invalid_argument("SyntheticConfig train_per_class must be >= 1");
  if (test_per_class < 0)
    throw std::invalid_argument("SyntheticConfig test_per_class must be >= 0");
  if (!(separation > 0.0)) throw std::invalid_argument("SyntheticConfig separation must be > 0");
}

namespace {

Matrix draw_means(const SyntheticConfig& cfg, Rng& rng) {
  Matrix means(static_cast<std::size_t>(cfg.num_classes),
               static_cast<std::size_t>(cfg.input_dim));
  // Means are Gaussian with a spread that puts typical pairwise distances
  // just above the separation floor, so `separation` controls how much the
  // clusters overlap. Rejection enforces the floor; the spread grows when
  // placement stalls, so the loop terminates for any (C, dim, separation).
  double sigma = 1.25 * cfg.separation / std::sqrt(2.0 * cfg.input_dim);
  for (int c = 0; c < cfg.num_classes; ++c) {
    int attempts = 0;
    for (;;) {
      std::vector<double> candidate(static_cast<std::size_t>(cfg.input_dim));
      for (double& x : candidate) x = sigma * rng.normal();
      bool ok = true;
      for (int prev = 0; prev < c && ok; ++prev) {
        double dist2 = 0.0;
        for (int d = 0; d < cfg.input_dim; ++d) {
          const double diff = candidate[static_cast<std::size_t>(d)] -
                              means(static_cast<std::size_t>(prev), static_cast<std::size_t>(d));
          dist2 += diff * diff;
        }
        ok = dist2 >= cfg.separation * cfg.separation;
      }
      if (ok) {
        for (int d = 0; d < cfg.input_dim; ++d)
          means(static_cast<std::size_t>(c), static_cast<std::size_t>(d)) =
              candidate[static_cast<std::size_t>(d)];
        break;
      }
      if (++attempts % 64 == 0) sigma *= 1.2;
    }
  }
  return means;
}

Dataset draw_samples(const Matrix& means, int per_class, int num_classes, int input_dim,
                     Rng& rng) {
  Dataset ds;
  ds.num_classes = num_classes;
  ds.inputs = Matrix(static_cast<std::size_t>(num_classes) * per_class,
                     static_cast<std::size_t>(input_dim));
  ds.labels.resize(ds.inputs.rows());
  std::size_t row = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (int k = 0; k < per_class; ++k, ++row) {
      for (int d = 0; d < input_dim; ++d) {
        ds.inputs(row, static_cast<std::size_t>(d)) =
            means(static_cast<std::size_t>(c), static_cast<std::size_t>(d)) + rng.normal();
      }
      ds.labels[row] = c;
    }
  }
  return ds;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng means_rng(derive_seed(seed, 0));
  Rng train_rng(derive_seed(seed, 1));
  Rng test_rng(derive_seed(seed, 2));

  SyntheticDataset out;
  out.class_means = draw_means(cfg, means_rng);
  out.train = draw_samples(out.class_means, cfg.train_per_class, cfg.num_classes,
                           cfg.input_dim, train_rng);
  if (cfg.test_per_class > 0) {
    out.test = draw_samples(out.class_means, cfg.test_per_class, cfg.num_classes,
                            cfg.input_dim, test_rng);
  } else {
    out.test.num_classes = cfg.num_classes;
  }
  return out;
}

PartitionPlan dirichlet_partition(const Dataset& dataset, int n_clients, double alpha,
                                  std::uint64_t seed) {
  if (n_clients < 1) throw std::invalid_argument("dirichlet_partition: n_clients must be >= 1");
  if (!(alpha > 0.0)) throw std::invalid_argument("dirichlet_partition: alpha must be > 0");
  dataset.validate();

  PartitionPlan plan;
  plan.alpha = alpha;
  plan.seed = seed;
  plan.assignments.assign(static_cast<std::size_t>(n_clients), {});

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(dataset.num_classes));
  for (std::size_t i = 0; i < dataset.labels.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(static_cast<int>(i));
  }

  Rng rng(seed);
  for (auto& indices : by_class) {
    if (indices.empty()) continue;
    rng.shuffle(indices);
    const auto shares = rng.dirichlet(alpha, n_clients);
    const auto m = indices.size();
    // Cut points at floor(cumulative_share * m); the last client takes the
    // remainder so every sample is assigned exactly once.
    std::size_t start = 0;
    double cumulative = 0.0;
    for (int client = 0; client < n_clients; ++client) {
      std::size_t end;
      if (client == n_clients - 1) {
        end = m;
      } else {
        cumulative += shares[static_cast<std::size_t>(client)];
        end = static_cast<std::size_t>(std::floor(cumulative * static_cast<double>(m)));
        end = std::clamp(end, start, m);
      }
      for (std::size_t i = start; i < end; ++i) {
        plan.assignments[static_cast<std::size_t>(client)].push_back(indices[i]);
      }
      start = end;
    }
  }
  for (auto& assignment : plan.assignments) {
    std::sort(assignment.begin(), assignment.end());
  }
  return plan;
}

ClientData split_labeled_unlabeled(const Dataset& dataset, const std::vector<int>& sample_indices,
                                   double unlabeled_fraction, std::uint64_t seed) {
  if (unlabeled_fraction < 0.0 || unlabeled_fraction > 1.0)
    throw std::invalid_argument("split_labeled_unlabeled: fraction must be in [0, 1]");
  const auto total = sample_indices.size();
  const auto n_unlabeled = static_cast<std::size_t>(
      std::lround(unlabeled_fraction * static_cast<double>(total)));

  std::vector<int> order = sample_indices;
  Rng rng(seed);
  rng.shuffle(order);

  ClientData out;
  out.labeled.num_classes = dataset.num_classes;

  const std::vector<int> unlabeled_idx(order.begin(), order.begin() + static_cast<long>(n_unlabeled));
  const std::vector<int> labeled_idx(order.begin() + static_cast<long>(n_unlabeled), order.end());

  out.labeled.inputs = dataset.inputs.gather_rows(labeled_idx);
  out.labeled.labels.reserve(labeled_idx.size());
  for (int i : labeled_idx) out.labeled.labels.push_back(dataset.labels[static_cast<std::size_t>(i)]);
  out.unlabeled = dataset.inputs.gather_rows(unlabeled_idx);
  return out;
}

PoolSplit build_public_pool(const Dataset& dataset, std::size_t size, bool labeled,
                            std::uint64_t seed) {
  if (size > dataset.size())
    throw std::invalid_argument("build_public_pool: size exceeds dataset size");
  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<int> pool_idx(order.begin(), order.begin() + static_cast<long>(size));
  PoolSplit out;
  out.remaining_indices.assign(order.begin() + static_cast<long>(size), order.end());
  std::sort(out.remaining_indices.begin(), out.remaining_indices.end());

  out.pool.inputs = dataset.inputs.gather_rows(pool_idx);
  if (labeled) {
    std::vector<int> labels;
    labels.reserve(pool_idx.size());
    for (int i : pool_idx) labels.push_back(dataset.labels[static_cast<std::size_t>(i)]);
    out.pool.labels = std::move(labels);
  }
  return out;
}

namespace {

void write_row(std::ostream& os, std::span<const double> features, const char* label) {
  char buf[32];
  for (double x : features) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    os << buf << ',';
  }
  os << label << '\n';
}

}  // namespace

void export_dataset(std::ostream& os, const Dataset& dataset) {
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    const std::string label = std::to_string(dataset.labels[r]);
    write_row(os, dataset.inputs.row(r), label.c_str());
  }
}

void export_inputs(std::ostream& os, const Matrix& inputs) {
  for (std::size_t r = 0; r < inputs.rows(); ++r) {
    write_row(os, inputs.row(r), "?");
  }
}

}  // namespace fedkd
