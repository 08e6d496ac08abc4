#include "fedkd/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace fedkd {

std::vector<int> sample_active(const std::vector<ClientState>& clients, double fraction,
                               Rng& rng) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("sample_active: fraction must be in (0, 1]");
  std::vector<int> eligible;
  for (const auto& c : clients) {
    if (c.data.labeled.size() > 0) eligible.push_back(c.id);
  }
  if (eligible.empty()) throw std::runtime_error("sample_active: no eligible clients");

  const auto n = clients.size();
  auto k = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
  k = std::clamp<std::size_t>(k, 1, eligible.size());

  // Partial Fisher-Yates over the eligible ids.
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(
                           rng.uniform_int(static_cast<int>(eligible.size() - i)));
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(k);
  std::sort(eligible.begin(), eligible.end());
  return eligible;
}

ParamVector aggregate_uniform(std::vector<ClientUpdate> updates) {
  if (updates.empty()) throw std::invalid_argument("aggregate_uniform: empty update list");
  std::sort(updates.begin(), updates.end(),
            [](const ClientUpdate& a, const ClientUpdate& b) { return a.client_id < b.client_id; });
  for (std::size_t i = 1; i < updates.size(); ++i) {
    if (updates[i].client_id == updates[i - 1].client_id)
      throw std::invalid_argument("aggregate_uniform: duplicate client id");
    if (updates[i].params.size() != updates[0].params.size())
      throw std::invalid_argument("aggregate_uniform: parameter length mismatch");
  }

  // Anchored mean: base + mean of (v_i - base). Averaging k identical
  // vectors returns the input bit-exactly.
  const ParamVector& base = updates[0].params;
  std::vector<double> acc(base.size(), 0.0);
  for (const auto& u : updates) {
    for (std::size_t i = 0; i < base.size(); ++i) acc[i] += u.params.values[i] - base.values[i];
  }
  const double inv_k = 1.0 / static_cast<double>(updates.size());
  ParamVector out;
  out.values.resize(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out.values[i] = base.values[i] + acc[i] * inv_k;
  return out;
}

ParamVector local_sgd(const ModelSpec& spec, const ParamVector& start, const Dataset& labeled,
                      int tau, int batch_size, double lr, double weight_decay, Rng& rng,
                      PhaseStats* stats) {
  if (tau < 1) throw std::invalid_argument("local_sgd: tau must be >= 1");
  if (labeled.size() == 0) throw std::invalid_argument("local_sgd: empty labeled data");
  BatchCycler cycler(labeled.size(), rng);
  ParamVector params = start;
  for (int step = 0; step < tau; ++step) {
    const auto idx = cycler.next(batch_size);
    const Matrix batch = labeled.inputs.gather_rows(idx);
    std::vector<int> batch_labels;
    batch_labels.reserve(idx.size());
    for (int i : idx) batch_labels.push_back(labeled.labels[static_cast<std::size_t>(i)]);

    const Matrix logits = forward(spec, params, batch);
    if (stats) {
      stats->loss_sum += cross_entropy(logits, batch_labels);
      stats->steps += 1;
    }
    const Matrix dlogits = cross_entropy_grad(logits, batch_labels);
    const Gradients grads = backward(spec, params, batch, dlogits);
    params = sgd_step(params, grads, lr, weight_decay);
  }
  return params;
}

ParamVector local_kd(const ModelSpec& student_spec, const ParamVector& start,
                     const ModelSpec& teacher_spec, const ParamVector& teacher_params,
                     const Matrix& unlabeled, int tau, int batch_size, double lr,
                     double weight_decay, double lambda_effective, const DistillConfig& cfg,
                     Rng& rng, PhaseStats* stats) {
  if (tau < 1) throw std::invalid_argument("local_kd: tau must be >= 1");
  if (lambda_effective < 0.0)
    throw std::invalid_argument("local_kd: lambda_effective must be >= 0");
  if (lambda_effective == 0.0) return start;  // zero objective
  if (unlabeled.rows() == 0) throw std::invalid_argument("local_kd: empty unlabeled data");

  BatchCycler cycler(unlabeled.rows(), rng);
  ParamVector params = start;
  for (int step = 0; step < tau; ++step) {
    const auto idx = cycler.next(batch_size);
    const Matrix batch = unlabeled.gather_rows(idx);
    const Matrix teacher_logits = forward(teacher_spec, teacher_params, batch);
    const Matrix student_logits = forward(student_spec, params, batch);
    const DistillBatchResult d = distill_loss(teacher_logits, student_logits, cfg);
    if (stats) {
      stats->loss_sum += d.loss;
      stats->steps += 1;
    }
    Matrix dlogits = d.grad;
    for (double& g : dlogits.data()) g *= lambda_effective;
    const Gradients grads = backward(student_spec, params, batch, dlogits);
    params = sgd_step(params, grads, lr, weight_decay);
  }
  return params;
}

Matrix logit_ensemble(const std::vector<ModelRef>& models, const Matrix& inputs) {
  if (models.empty()) throw std::invalid_argument("logit_ensemble: empty model list");
  const int classes = models[0].spec->num_classes;
  for (const auto& m : models) {
    if (m.spec->num_classes != classes)
      throw std::invalid_argument("logit_ensemble: class count mismatch");
  }
  // Anchored mean in list order, like aggregate_uniform.
  Matrix base = forward(*models[0].spec, *models[0].params, inputs);
  Matrix acc(base.rows(), base.cols(), 0.0);
  for (std::size_t k = 1; k < models.size(); ++k) {
    const Matrix logits = forward(*models[k].spec, *models[k].params, inputs);
    for (std::size_t i = 0; i < acc.data().size(); ++i) {
      acc.data()[i] += logits.data()[i] - base.data()[i];
    }
  }
  const double inv_k = 1.0 / static_cast<double>(models.size());
  for (std::size_t i = 0; i < acc.data().size(); ++i) {
    base.data()[i] += acc.data()[i] * inv_k;
  }
  return base;
}

namespace {

double accuracy_of_logits(const Matrix& logits, const std::vector<int>& labels) {
  if (logits.rows() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    if (static_cast<int>(best) == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace

double accuracy(const ModelSpec& spec, const ParamVector& params, const Dataset& test) {
  return accuracy_of_logits(forward(spec, params, test.inputs), test.labels);
}

double ensemble_accuracy(const std::vector<ModelRef>& models, const Dataset& test) {
  return accuracy_of_logits(logit_ensemble(models, test.inputs), test.labels);
}

World build_world(const ExperimentConfig& cfg) {
  cfg.validate();

  SyntheticConfig scfg;
  scfg.num_classes = cfg.num_classes;
  scfg.input_dim = cfg.input_dim;
  scfg.train_per_class = cfg.samples_per_class;
  scfg.test_per_class = cfg.test_per_class;
  scfg.separation = cfg.separation;
  SyntheticDataset synth = generate_synthetic(scfg, cfg.seed_data);

  World world;
  world.aux_spec = ModelSpec{cfg.input_dim, cfg.hidden_widths, cfg.num_classes, cfg.aux_scale};
  world.target_spec = ModelSpec{cfg.input_dim, cfg.hidden_widths, cfg.num_classes, 1.0};
  world.test = std::move(synth.test);
  world.seed_init = cfg.seed_init;
  world.seed_train = cfg.seed_train;

  PoolSplit pool_split =
      build_public_pool(synth.train, static_cast<std::size_t>(cfg.public_pool_size),
                        cfg.public_pool_labeled, derive_seed(cfg.seed_partition, 100));
  world.pool = std::move(pool_split.pool);

  Dataset remaining;
  remaining.num_classes = synth.train.num_classes;
  remaining.inputs = synth.train.inputs.gather_rows(pool_split.remaining_indices);
  remaining.labels.reserve(pool_split.remaining_indices.size());
  for (int i : pool_split.remaining_indices)
    remaining.labels.push_back(synth.train.labels[static_cast<std::size_t>(i)]);

  const PartitionPlan plan = dirichlet_partition(remaining, cfg.n_clients, cfg.dirichlet_alpha,
                                                 derive_seed(cfg.seed_partition, 0));

  const int n_strong =
      static_cast<int>(std::lround(cfg.strong_fraction * static_cast<double>(cfg.n_clients)));
  world.clients.resize(static_cast<std::size_t>(cfg.n_clients));
  for (int id = 0; id < cfg.n_clients; ++id) {
    auto& client = world.clients[static_cast<std::size_t>(id)];
    client.id = id;
    client.strong = id < n_strong;
    client.data = split_labeled_unlabeled(remaining, plan.assignments[static_cast<std::size_t>(id)],
                                          cfg.unlabeled_fraction,
                                          derive_seed(cfg.seed_partition, 200 + id));
    client.rng = Rng(derive_seed(cfg.seed_train, 0x10000 + static_cast<std::uint64_t>(id)));
    const ModelSpec& spec = client.strong ? world.target_spec : world.aux_spec;
    client.local_params = init_model(spec, derive_seed(cfg.seed_init, 100 + static_cast<std::uint64_t>(id)));
  }
  return world;
}

namespace {

// Runs one job per participant, serially in ascending-id order or fanned out
// with std::async. Each job touches only its own client plus shared const
// state, and results are collected in participant order, so both modes give
// bit-identical outcomes.
template <typename Fn>
std::vector<ClientUpdate> run_clients(const std::vector<ClientState*>& participants,
                                      bool parallel, Fn&& fn) {
  std::vector<ClientUpdate> updates(participants.size());
  if (!parallel) {
    for (std::size_t i = 0; i < participants.size(); ++i) updates[i] = fn(*participants[i]);
    return updates;
  }
  std::vector<std::future<ClientUpdate>> jobs;
  jobs.reserve(participants.size());
  for (ClientState* c : participants) {
    jobs.push_back(std::async(std::launch::async, [&fn, c]() { return fn(*c); }));
  }
  for (std::size_t i = 0; i < jobs.size(); ++i) updates[i] = jobs[i].get();
  return updates;
}

struct RoundOutcome {
  PhaseStats aux_ce;  // w_s track of the proposed method
  PhaseStats ce;
  PhaseStats kd;
  int n_aux_active = 0;     // clients that exchanged the aux/common model
  int n_target_active = 0;  // clients that joined the strong-model phase
  bool skipped_target = false;
};

class Engine {
 public:
  Engine(const ExperimentConfig& cfg, Method method, World world)
      : cfg_(cfg),
        method_(method),
        world_(std::move(world)),
        engine_rng_(derive_seed(cfg.seed_train, 1)),
        server_rng_(derive_seed(cfg.seed_train, 2)) {
    schedule_.base_lr = cfg.base_lr;
    schedule_.milestones = cfg.lr_milestones;
    schedule_.validate();
    distill_.temperature = cfg.temperature;
    distill_.lambda_max = cfg.lambda_max;
    distill_.ramp_threshold_epoch = cfg.ramp_threshold;
    distill_.apply_t_squared = cfg.apply_t_squared;
    distill_.validate();

    const bool needs_pool =
        method == Method::feddf || method == Method::dsfl || method == Method::fedmd;
    if (needs_pool && world_.pool.size() == 0)
      throw std::invalid_argument("method " + method_to_string(method) +
                                  " requires a public pool");
    if (method == Method::fedmd && !world_.pool.labeled())
      throw std::invalid_argument("method fedmd requires a labeled public pool");

    server_.aux = init_model(world_.aux_spec, derive_seed(world_.seed_init, 0));
    server_.target = init_model(world_.target_spec, derive_seed(world_.seed_init, 1));
  }

  RunResult run() {
    RunResult result;
    result.method = method_;
    result.comm_report.method = method_to_string(method_);

    const std::size_t ws = world_.aux_spec.param_count();
    const std::size_t wl = world_.target_spec.param_count();

    for (int round = 0; round < cfg_.rounds; ++round) {
      const double lr = schedule_.lr_at(round);
      const double lambda = lambda_at(round, distill_);

      RoundPlan plan;
      plan.round_index = round;
      plan.active = sample_active(world_.clients, cfg_.activation_fraction, engine_rng_);
      for (int id : plan.active) {
        if (world_.clients[static_cast<std::size_t>(id)].strong) plan.active_strong.push_back(id);
      }

      RoundOutcome outcome;
      switch (method_) {
        case Method::proposed:
          outcome = round_proposed(plan, lr, lambda);
          break;
        case Method::fedavg_weak_only:
          outcome = round_fedavg(plan, lr, /*large=*/false);
          break;
        case Method::fedavg_strong_only:
          outcome = round_fedavg(plan, lr, /*large=*/true);
          break;
        case Method::feddf:
          outcome = round_feddf(plan, lr);
          break;
        case Method::dsfl:
          outcome = round_logit_exchange(plan, lr, /*digest_private=*/false);
          break;
        case Method::fedmd:
          outcome = round_logit_exchange(plan, lr, /*digest_private=*/true);
          break;
      }

      if (outcome.skipped_target) result.skipped_target_rounds.push_back(round);
      result.aux_ce_steps += static_cast<std::uint64_t>(outcome.aux_ce.steps);
      result.ce_steps += static_cast<std::uint64_t>(outcome.ce.steps);
      result.kd_steps += static_cast<std::uint64_t>(outcome.kd.steps);
      CommRoundEntry entry = comm_cost(method_, ws, wl, cfg_.num_classes, outcome.n_aux_active,
                                       outcome.n_target_active, world_.pool.size(),
                                       cfg_.feddf_large);
      entry.round = round;
      result.comm_report.add(entry);

      if ((round + 1) % cfg_.eval_every == 0 || round + 1 == cfg_.rounds) {
        result.records.push_back(evaluate(round, lambda, outcome));
      }
    }

    result.live_comm = server_.comm;
    result.final_aux = server_.aux;
    result.final_target = server_.target;
    return result;
  }

  const ServerState& server() const { return server_; }
  World& world() { return world_; }

 private:
  std::vector<ClientState*> by_ids(const std::vector<int>& ids) {
    std::vector<ClientState*> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(&world_.clients[static_cast<std::size_t>(id)]);
    return out;
  }

  // Step 1: every active client trains w_s on its labeled data.
  void auxiliary_round(const std::vector<ClientState*>& participants, double lr,
                       RoundOutcome& outcome) {
    const ParamVector snapshot = server_.aux;
    const std::size_t ws = world_.aux_spec.param_count();
    auto updates = run_clients(participants, cfg_.parallel_clients, [&](ClientState& c) {
      ClientUpdate u;
      u.client_id = c.id;
      u.params = local_sgd(world_.aux_spec, snapshot, c.data.labeled, cfg_.tau, cfg_.batch_size,
                           lr, cfg_.weight_decay, c.rng, &u.ce);
      return u;
    });
    for (const auto& u : updates) {
      outcome.aux_ce.merge(u.ce);
      server_.comm.download += ws;
      server_.comm.upload += ws;
    }
    outcome.n_aux_active += static_cast<int>(participants.size());
    server_.aux = aggregate_uniform(std::move(updates));
  }

  // Step 2: participants receive w_s and w_l, run tau CE steps on labeled
  // data, then tau KD steps against the aux teacher on unlabeled data.
  void target_round(const std::vector<ClientState*>& participants, double lr, double lambda,
                    RoundOutcome& outcome) {
    if (participants.empty()) {
      outcome.skipped_target = true;
      return;
    }
    const ParamVector target_snapshot = server_.target;
    const ParamVector teacher = server_.aux;  // freshly aggregated this round
    const std::size_t ws = world_.aux_spec.param_count();
    const std::size_t wl = world_.target_spec.param_count();

    auto updates = run_clients(participants, cfg_.parallel_clients, [&](ClientState& c) {
      ClientUpdate u;
      u.client_id = c.id;
      u.params = local_sgd(world_.target_spec, target_snapshot, c.data.labeled, cfg_.tau,
                           cfg_.batch_size, lr, cfg_.weight_decay, c.rng, &u.ce);
      if (cfg_.kd_phase_includes_ce) {
        u.params = kd_phase_with_ce(c, u.params, teacher, lr, lambda, &u);
      } else if (c.data.unlabeled.rows() > 0) {
        u.params = local_kd(world_.target_spec, u.params, world_.aux_spec, teacher,
                            c.data.unlabeled, cfg_.tau, cfg_.batch_size, lr, cfg_.weight_decay,
                            lambda, distill_, c.rng, &u.kd);
      }
      return u;
    });
    for (const auto& u : updates) {
      outcome.ce.merge(u.ce);
      outcome.kd.merge(u.kd);
      server_.comm.download += ws + wl;
      server_.comm.upload += wl;
    }
    outcome.n_target_active = static_cast<int>(participants.size());
    server_.target = aggregate_uniform(std::move(updates));
  }

  // Joint reading of the two-term objective: each KD-phase step combines a
  // CE gradient on a labeled batch with the weighted KD gradient on an
  // unlabeled batch.
  ParamVector kd_phase_with_ce(ClientState& c, ParamVector params, const ParamVector& teacher,
                               double lr, double lambda, ClientUpdate* u) {
    BatchCycler labeled_cycler(c.data.labeled.size(), c.rng);
    const bool has_unlabeled = c.data.unlabeled.rows() > 0 && lambda > 0.0;
    std::optional<BatchCycler> unlabeled_cycler;
    if (has_unlabeled) unlabeled_cycler.emplace(c.data.unlabeled.rows(), c.rng);

    for (int step = 0; step < cfg_.tau; ++step) {
      const auto idx = labeled_cycler.next(cfg_.batch_size);
      const Matrix batch = c.data.labeled.inputs.gather_rows(idx);
      std::vector<int> labels;
      labels.reserve(idx.size());
      for (int i : idx) labels.push_back(c.data.labeled.labels[static_cast<std::size_t>(i)]);
      const Matrix logits = forward(world_.target_spec, params, batch);
      u->ce.loss_sum += cross_entropy(logits, labels);
      u->ce.steps += 1;
      Gradients grads = backward(world_.target_spec, params, batch,
                                 cross_entropy_grad(logits, labels));

      if (has_unlabeled) {
        const auto uidx = unlabeled_cycler->next(cfg_.batch_size);
        const Matrix ubatch = c.data.unlabeled.gather_rows(uidx);
        const Matrix teacher_logits = forward(world_.aux_spec, teacher, ubatch);
        const Matrix student_logits = forward(world_.target_spec, params, ubatch);
        const DistillBatchResult d = distill_loss(teacher_logits, student_logits, distill_);
        u->kd.loss_sum += d.loss;
        u->kd.steps += 1;
        Matrix dlogits = d.grad;
        for (double& g : dlogits.data()) g *= lambda;
        const Gradients kd_grads = backward(world_.target_spec, params, ubatch, dlogits);
        for (std::size_t i = 0; i < grads.size(); ++i) grads.values[i] += kd_grads.values[i];
      }
      params = sgd_step(params, grads, lr, cfg_.weight_decay);
    }
    return params;
  }

  RoundOutcome round_proposed(const RoundPlan& plan, double lr, double lambda) {
    RoundOutcome outcome;
    if (cfg_.aux_rounds_enabled) {
      auxiliary_round(by_ids(plan.active), lr, outcome);
    }
    std::vector<int> participants = plan.active_strong;
    if (cfg_.all_strong) {
      participants.clear();
      for (const auto& c : world_.clients) {
        if (c.strong && c.data.labeled.size() > 0) participants.push_back(c.id);
      }
    }
    target_round(by_ids(participants), lr, lambda, outcome);
    return outcome;
  }

  // Non-KD baselines run 2*tau local steps for workload parity.
  RoundOutcome round_fedavg(const RoundPlan& plan, double lr, bool large) {
    RoundOutcome outcome;
    const std::vector<int>& ids = large ? plan.active_strong : plan.active;
    const auto participants = by_ids(ids);
    if (participants.empty()) {
      outcome.skipped_target = true;
      return outcome;
    }
    const ModelSpec& spec = large ? world_.target_spec : world_.aux_spec;
    ParamVector& slot = large ? server_.target : server_.aux;
    const ParamVector snapshot = slot;
    const std::size_t w = spec.param_count();

    auto updates = run_clients(participants, cfg_.parallel_clients, [&](ClientState& c) {
      ClientUpdate u;
      u.client_id = c.id;
      u.params = local_sgd(spec, snapshot, c.data.labeled, 2 * cfg_.tau, cfg_.batch_size, lr,
                           cfg_.weight_decay, c.rng, &u.ce);
      return u;
    });
    for (const auto& u : updates) {
      outcome.ce.merge(u.ce);
      server_.comm.download += w;
      server_.comm.upload += w;
    }
    if (large) {
      outcome.n_target_active = static_cast<int>(participants.size());
    } else {
      outcome.n_aux_active = static_cast<int>(participants.size());
    }
    slot = aggregate_uniform(std::move(updates));
    return outcome;
  }

  // FedAvg plus tau server-side KD steps on the public pool, teacher = logit
  // ensemble of the received client models.
  RoundOutcome round_feddf(const RoundPlan& plan, double lr) {
    RoundOutcome outcome;
    const std::vector<int>& ids = cfg_.feddf_large ? plan.active_strong : plan.active;
    const auto participants = by_ids(ids);
    if (participants.empty()) {
      outcome.skipped_target = true;
      return outcome;
    }
    const ModelSpec& spec = cfg_.feddf_large ? world_.target_spec : world_.aux_spec;
    ParamVector& slot = cfg_.feddf_large ? server_.target : server_.aux;
    const ParamVector snapshot = slot;
    const std::size_t w = spec.param_count();

    auto updates = run_clients(participants, cfg_.parallel_clients, [&](ClientState& c) {
      ClientUpdate u;
      u.client_id = c.id;
      u.params = local_sgd(spec, snapshot, c.data.labeled, cfg_.tau, cfg_.batch_size, lr,
                           cfg_.weight_decay, c.rng, &u.ce);
      return u;
    });
    for (const auto& u : updates) {
      outcome.ce.merge(u.ce);
      server_.comm.download += w;
      server_.comm.upload += w;
    }
    if (cfg_.feddf_large) {
      outcome.n_target_active = static_cast<int>(participants.size());
    } else {
      outcome.n_aux_active = static_cast<int>(participants.size());
    }

    std::vector<ModelRef> teachers;
    teachers.reserve(updates.size());
    for (const auto& u : updates) teachers.push_back({&spec, &u.params});
    const Matrix teacher_logits = logit_ensemble(teachers, world_.pool.inputs);

    ParamVector student = aggregate_uniform(updates);
    BatchCycler cycler(world_.pool.size(), server_rng_);
    for (int step = 0; step < cfg_.tau; ++step) {
      const auto idx = cycler.next(cfg_.batch_size);
      const Matrix batch = world_.pool.inputs.gather_rows(idx);
      const Matrix t_logits = teacher_logits.gather_rows(idx);
      const Matrix s_logits = forward(spec, student, batch);
      const DistillBatchResult d = distill_loss(t_logits, s_logits, distill_);
      outcome.kd.loss_sum += d.loss;
      outcome.kd.steps += 1;
      const Gradients grads = backward(spec, student, batch, d.grad);
      student = sgd_step(student, grads, lr, cfg_.weight_decay);
    }
    slot = std::move(student);
    return outcome;
  }

  // dsfl: local CE training, logit upload on the pool, broadcast average,
  // then KD toward the broadcast. fedmd (digest_private): consensus from the
  // round-start models, tau digest steps toward it on the pool, then tau CE
  // steps on private labeled data.
  RoundOutcome round_logit_exchange(const RoundPlan& plan, double lr, bool digest_private) {
    RoundOutcome outcome;
    const auto participants = by_ids(plan.active);
    const std::uint64_t logit_elems =
        static_cast<std::uint64_t>(cfg_.num_classes) * world_.pool.size();

    Matrix broadcast;  // pool-sized logit matrix every participant distills toward
    std::vector<ClientUpdate> trained;
    if (digest_private) {
      std::vector<ModelRef> refs;
      refs.reserve(participants.size());
      for (ClientState* c : participants) refs.push_back({client_spec(*c), &c->local_params});
      broadcast = logit_ensemble(refs, world_.pool.inputs);
    } else {
      const int tau = cfg_.tau;
      trained = run_clients(participants, cfg_.parallel_clients, [&](ClientState& c) {
        ClientUpdate u;
        u.client_id = c.id;
        u.params = local_sgd(*client_spec(c), c.local_params, c.data.labeled, tau,
                             cfg_.batch_size, lr, cfg_.weight_decay, c.rng, &u.ce);
        return u;
      });
      for (std::size_t i = 0; i < participants.size(); ++i) {
        participants[i]->local_params = trained[i].params;
        outcome.ce.merge(trained[i].ce);
      }
      std::vector<ModelRef> refs;
      refs.reserve(participants.size());
      for (ClientState* c : participants) refs.push_back({client_spec(*c), &c->local_params});
      broadcast = logit_ensemble(refs, world_.pool.inputs);
    }

    // Averaged logits may be softened with a different temperature than the
    // KD loss uses; pre-scaling the teacher logits implements that.
    const double sharpen =
        cfg_.dsfl_sharpen_temperature > 0.0 ? cfg_.dsfl_sharpen_temperature : distill_.temperature;
    const double teacher_scale = distill_.temperature / sharpen;
    if (teacher_scale != 1.0) {
      for (double& v : broadcast.data()) v *= teacher_scale;
    }

    auto digests = run_clients(participants, cfg_.parallel_clients, [&](ClientState& c) {
      ClientUpdate u;
      u.client_id = c.id;
      u.params = c.local_params;
      const ModelSpec& spec = *client_spec(c);
      BatchCycler cycler(world_.pool.size(), c.rng);
      for (int step = 0; step < cfg_.tau; ++step) {
        const auto idx = cycler.next(cfg_.batch_size);
        const Matrix batch = world_.pool.inputs.gather_rows(idx);
        const Matrix t_logits = broadcast.gather_rows(idx);
        const Matrix s_logits = forward(spec, u.params, batch);
        const DistillBatchResult d = distill_loss(t_logits, s_logits, distill_);
        u.kd.loss_sum += d.loss;
        u.kd.steps += 1;
        const Gradients grads = backward(spec, u.params, batch, d.grad);
        u.params = sgd_step(u.params, grads, lr, cfg_.weight_decay);
      }
      if (digest_private) {
        u.params = local_sgd(spec, u.params, c.data.labeled, cfg_.tau, cfg_.batch_size, lr,
                             cfg_.weight_decay, c.rng, &u.ce);
      }
      return u;
    });
    for (std::size_t i = 0; i < participants.size(); ++i) {
      participants[i]->local_params = digests[i].params;
      outcome.ce.merge(digests[i].ce);
      outcome.kd.merge(digests[i].kd);
      server_.comm.upload += logit_elems;
      server_.comm.download += logit_elems;
    }
    outcome.n_aux_active = static_cast<int>(participants.size());
    return outcome;
  }

  const ModelSpec* client_spec(const ClientState& c) const {
    return c.strong ? &world_.target_spec : &world_.aux_spec;
  }

  MetricsRecord evaluate(int round, double lambda, const RoundOutcome& outcome) {
    MetricsRecord rec;
    rec.round = round;
    rec.epoch_equivalent = static_cast<double>(round);
    PhaseStats all_ce = outcome.ce;
    all_ce.merge(outcome.aux_ce);
    rec.train_ce_loss = all_ce.mean();
    rec.kd_loss = outcome.kd.mean();
    rec.lambda_effective = lambda;
    rec.cum_comm_upload = server_.comm.upload;
    rec.cum_comm_download = server_.comm.download;

    switch (method_) {
      case Method::proposed: {
        rec.aux_test_accuracy = accuracy(world_.aux_spec, server_.aux, world_.test);
        rec.target_test_accuracy = accuracy(world_.target_spec, server_.target, world_.test);
        break;
      }
      case Method::fedavg_weak_only: {
        const double acc = accuracy(world_.aux_spec, server_.aux, world_.test);
        rec.aux_test_accuracy = acc;
        rec.target_test_accuracy = acc;
        break;
      }
      case Method::fedavg_strong_only: {
        const double acc = accuracy(world_.target_spec, server_.target, world_.test);
        rec.aux_test_accuracy = acc;
        rec.target_test_accuracy = acc;
        break;
      }
      case Method::feddf: {
        const double acc = cfg_.feddf_large
                               ? accuracy(world_.target_spec, server_.target, world_.test)
                               : accuracy(world_.aux_spec, server_.aux, world_.test);
        rec.aux_test_accuracy = acc;
        rec.target_test_accuracy = acc;
        break;
      }
      case Method::dsfl:
      case Method::fedmd: {
        // Clients keep personalized models here. The headline is the mean
        // local-model accuracy (what a participant ends up with); the
        // averaged-logit accuracy goes in the aux column.
        std::vector<ModelRef> refs;
        refs.reserve(world_.clients.size());
        double local_sum = 0.0;
        for (const auto& c : world_.clients) {
          refs.push_back({client_spec(c), &c.local_params});
          local_sum += accuracy(*client_spec(c), c.local_params, world_.test);
        }
        rec.aux_test_accuracy = ensemble_accuracy(refs, world_.test);
        rec.target_test_accuracy = local_sum / static_cast<double>(world_.clients.size());
        break;
      }
    }
    return rec;
  }

  const ExperimentConfig& cfg_;
  Method method_;
  World world_;
  LrSchedule schedule_;
  DistillConfig distill_;
  Rng engine_rng_;
  Rng server_rng_;
  ServerState server_;
};

}  // namespace

RunResult run_method(const ExperimentConfig& cfg, Method method, World world) {
  Engine engine(cfg, method, std::move(world));
  return engine.run();
}

RunResult run_method(const ExperimentConfig& cfg, Method method) {
  return run_method(cfg, method, build_world(cfg));
}

}  // namespace fedkd
