#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "fedkd/analysis.hpp"
#include "fedkd/config.hpp"
#include "fedkd/data.hpp"
#include "fedkd/losses.hpp"
#include "fedkd/nn.hpp"
#include "fedkd/rng.hpp"

namespace fedkd {

struct ClientState {
  int id = 0;
  bool strong = false;
  ClientData data;
  Rng rng;  // private stream; the only RNG a client's local training touches

  // Persistent per-client model for the logit-exchange methods (dsfl,
  // fedmd). Strong clients hold the target architecture, weak the auxiliary.
  ParamVector local_params;

  ClientState() : rng(0) {}
};

struct RoundPlan {
  int round_index = 0;
  std::vector<int> active;         // sampled without replacement, ascending
  std::vector<int> active_strong;  // active ∩ strong set
};

struct CommCounters {
  std::uint64_t upload = 0;
  std::uint64_t download = 0;
};

struct ServerState {
  ParamVector aux;     // w_s
  ParamVector target;  // w_l
  CommCounters comm;
};

struct PhaseStats {
  double loss_sum = 0.0;
  int steps = 0;

  double mean() const { return steps ? loss_sum / steps : 0.0; }
  void merge(const PhaseStats& o) {
    loss_sum += o.loss_sum;
    steps += o.steps;
  }
};

struct ClientUpdate {
  int client_id = 0;
  ParamVector params;
  PhaseStats ce;
  PhaseStats kd;
};

// Draws round(fraction * n) ids uniformly without replacement among clients
// with non-empty labeled data (fewer when not enough are eligible). Returns
// ascending ids. Throws when no client is eligible.
std::vector<int> sample_active(const std::vector<ClientState>& clients, double fraction,
                               Rng& rng);

// Elementwise uniform average, summed in ascending client-id order and
// anchored at the first vector so averaging k identical inputs returns the
// input bit-exactly.
ParamVector aggregate_uniform(std::vector<ClientUpdate> updates);

// Shuffled-cycling minibatch index source: a fresh permutation whenever the
// previous one is exhausted.
class BatchCycler {
 public:
  BatchCycler(std::size_t n, Rng& rng) : rng_(&rng), order_(n) {
    if (n == 0) throw std::invalid_argument("BatchCycler: empty sample set");
    std::iota(order_.begin(), order_.end(), 0);
    rng.shuffle(order_);
  }

  std::vector<int> next(int batch_size) {
    std::vector<int> batch(static_cast<std::size_t>(batch_size));
    for (auto& idx : batch) {
      if (pos_ == order_.size()) {
        rng_->shuffle(order_);
        pos_ = 0;
      }
      idx = order_[pos_++];
    }
    return batch;
  }

 private:
  Rng* rng_;
  std::vector<int> order_;
  std::size_t pos_ = 0;
};

// tau minibatch SGD steps minimizing cross-entropy on the given labeled
// data. Returns the updated parameters; `start` is not mutated.
ParamVector local_sgd(const ModelSpec& spec, const ParamVector& start, const Dataset& labeled,
                      int tau, int batch_size, double lr, double weight_decay, Rng& rng,
                      PhaseStats* stats = nullptr);

// tau minibatch steps minimizing lambda_effective * distill_loss against a
// frozen teacher on unlabeled inputs. A zero lambda_effective is a no-op and
// consumes no randomness.
ParamVector local_kd(const ModelSpec& student_spec, const ParamVector& start,
                     const ModelSpec& teacher_spec, const ParamVector& teacher_params,
                     const Matrix& unlabeled, int tau, int batch_size, double lr,
                     double weight_decay, double lambda_effective, const DistillConfig& cfg,
                     Rng& rng, PhaseStats* stats = nullptr);

struct ModelRef {
  const ModelSpec* spec = nullptr;
  const ParamVector* params = nullptr;
};

// Arithmetic mean of per-model logits on shared inputs, summed in list
// order and anchored at the first model's logits.
Matrix logit_ensemble(const std::vector<ModelRef>& models, const Matrix& inputs);

// Fraction of test rows whose argmax logit equals the label.
double accuracy(const ModelSpec& spec, const ParamVector& params, const Dataset& test);
double ensemble_accuracy(const std::vector<ModelRef>& models, const Dataset& test);

struct World {
  ModelSpec aux_spec;
  ModelSpec target_spec;
  std::vector<ClientState> clients;
  Dataset test;
  PublicPool pool;
  std::uint64_t seed_init = 0;
  std::uint64_t seed_train = 0;
};

// Data generation, pool carving, Dirichlet partitioning, per-client splits
// and model seeds. Independent of the method, so paired methods start from
// bit-identical worlds.
World build_world(const ExperimentConfig& cfg);

struct MetricsRecord {
  int round = 0;
  double epoch_equivalent = 0.0;
  double aux_test_accuracy = 0.0;
  double target_test_accuracy = 0.0;
  double train_ce_loss = 0.0;
  double kd_loss = 0.0;
  double lambda_effective = 0.0;
  std::uint64_t cum_comm_upload = 0;
  std::uint64_t cum_comm_download = 0;
};

struct RunResult {
  Method method = Method::proposed;
  std::vector<MetricsRecord> records;
  CommReport comm_report;     // analysis-side accounting, one entry per round
  CommCounters live_comm;     // engine-side counters, must match the report
  ParamVector final_aux;
  ParamVector final_target;
  std::vector<int> skipped_target_rounds;

  // Local-step counters for workload-parity checks. aux_ce_steps covers the
  // w_s track of the proposed method; ce/kd cover the method's main track.
  std::uint64_t aux_ce_steps = 0;
  std::uint64_t ce_steps = 0;
  std::uint64_t kd_steps = 0;
};

RunResult run_method(const ExperimentConfig& cfg, Method method, World world);
RunResult run_method(const ExperimentConfig& cfg, Method method);

}  // namespace fedkd
