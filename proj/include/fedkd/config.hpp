#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fedkd {

enum class Method {
  proposed,
  fedavg_weak_only,
  fedavg_strong_only,
  feddf,
  dsfl,
  fedmd,
};

Method method_from_string(const std::string& name);
std::string method_to_string(Method m);

// Everything a run needs. Defaults are the documented conventions from the
// README; desk-scale configs override the budget fields.
struct ExperimentConfig {
  std::vector<Method> methods = {Method::proposed};

  // population
  int n_clients = 100;
  double strong_fraction = 0.2;
  double activation_fraction = 0.2;
  double dirichlet_alpha = 0.1;
  double unlabeled_fraction = 0.5;

  // model
  int input_dim = 16;
  std::vector<int> hidden_widths = {32};
  int num_classes = 10;
  double aux_scale = 0.25;

  // optimization
  int tau = 60;
  int batch_size = 32;
  double base_lr = 0.2;
  std::vector<std::pair<int, double>> lr_milestones = {{200, 0.02}, {300, 0.002}};
  double weight_decay = 1e-4;

  // distillation
  double temperature = 3.0;
  double lambda_max = 0.5;
  int ramp_threshold = 300;
  bool apply_t_squared = true;

  // budget
  int rounds = 400;
  int eval_every = 10;

  // seeds
  std::uint64_t seed_data = 1;
  std::uint64_t seed_partition = 2;
  std::uint64_t seed_init = 3;
  std::uint64_t seed_train = 4;
  int num_seeds = 1;

  // synthetic data
  int samples_per_class = 300;
  int test_per_class = 200;
  double separation = 3.0;

  // public pool (required by feddf / dsfl / fedmd)
  int public_pool_size = 0;
  bool public_pool_labeled = false;

  // engine flags
  bool all_strong = false;
  bool kd_phase_includes_ce = false;
  bool aux_rounds_enabled = true;
  bool parallel_clients = false;
  bool feddf_large = false;
  double dsfl_sharpen_temperature = 0.0;  // 0 = use `temperature`

  // bound report
  double bound_p = 0.05;
  std::optional<double> bound_discrepancy;  // unavailable unless supplied

  void validate() const;  // throws, message names the offending key
  bool operator==(const ExperimentConfig&) const = default;
};

// Parses the flat key-value schema (one `key = value` per line, `#`
// comments). Unknown keys are a hard error.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);

// Serializes in the same schema; load(save(c)) == c.
std::string save_config(const ExperimentConfig& cfg);

}  // namespace fedkd
