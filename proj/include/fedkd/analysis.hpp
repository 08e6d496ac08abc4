#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedkd/config.hpp"

namespace fedkd {

// sqrt(ln(2/p) / (2 * n_samples))
double hoeffding_term(double p, std::size_t n_samples);

struct RoleComm {
  std::uint64_t upload = 0;
  std::uint64_t download = 0;
};

// Element counts for one round of one method. Per-client fields describe a
// single active client of that role; upload/download are round totals.
struct CommRoundEntry {
  int round = 0;
  int n_active = 0;         // clients that exchanged the common/aux-track payload
  int n_active_strong = 0;  // clients participating in the strong-model phase
  RoleComm per_weak;        // per active weak client
  RoleComm per_strong;      // per active strong client, all phases combined
  RoleComm strong_target_phase;  // the target-model exchange alone (proposed)
  std::uint64_t upload = 0;
  std::uint64_t download = 0;
};

struct CommReport {
  std::string method;
  std::vector<CommRoundEntry> rounds;
  std::uint64_t total_upload = 0;
  std::uint64_t total_download = 0;

  void add(const CommRoundEntry& entry);
};

// Per-round element counts for `method`, given the participation of that
// round. ws/wl are param counts of the auxiliary and target models.
CommRoundEntry comm_cost(Method method, std::size_t ws, std::size_t wl, int num_classes,
                         int n_active, int n_active_strong, std::size_t public_pool_size,
                         bool feddf_large = false);

struct ClientBoundTerms {
  int client_id = 0;
  double empirical_loss = 0.0;  // measured on the client's labeled local data
  std::size_t n_labeled = 0;
  std::size_t n_tilde = 0;  // |labeled| + |unlabeled|
  double sample_term = 0.0;  // hoeffding_term(p, n_tilde)
  std::optional<double> discrepancy;  // d(D_i, D): user-supplied placeholder only
  std::optional<double> v_i;          // never estimable here
};

// The computable slice of the target model's generalization bound. The
// discrepancy and v terms stay unavailable unless supplied, and the
// aggregate covers the available terms only.
struct BoundReport {
  double p = 0.05;
  std::vector<ClientBoundTerms> clients;
  double mean_empirical_loss = 0.0;
  double mean_sample_term = 0.0;
  std::optional<double> mean_discrepancy;
  bool partial = true;  // true whenever any term is unavailable
};

struct MeasuredClientLoss {
  int client_id = 0;
  double empirical_loss = 0.0;
  std::size_t n_labeled = 0;
  std::size_t n_unlabeled = 0;
};

BoundReport bound_report(const std::vector<MeasuredClientLoss>& losses, double p,
                         std::optional<double> discrepancy_placeholder);

}  // namespace fedkd
