#include "fedkd/runner.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace fedkd {

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

nlohmann::json comm_report_json(const CommReport& report) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& e : report.rounds) {
    rounds.push_back({
        {"round", e.round},
        {"n_active", e.n_active},
        {"n_active_strong", e.n_active_strong},
        {"upload", e.upload},
        {"download", e.download},
        {"per_weak", {{"upload", e.per_weak.upload}, {"download", e.per_weak.download}}},
        {"per_strong", {{"upload", e.per_strong.upload}, {"download", e.per_strong.download}}},
        {"strong_target_phase",
         {{"upload", e.strong_target_phase.upload},
          {"download", e.strong_target_phase.download}}},
    });
  }
  return {
      {"method", report.method},
      {"total_upload", report.total_upload},
      {"total_download", report.total_download},
      {"rounds", rounds},
  };
}

nlohmann::json bound_report_json(const BoundReport& report) {
  nlohmann::json clients = nlohmann::json::array();
  for (const auto& c : report.clients) {
    nlohmann::json entry = {
        {"client_id", c.client_id},
        {"empirical_loss", c.empirical_loss},
        {"n_labeled", c.n_labeled},
        {"n_tilde", c.n_tilde},
        {"sample_term", c.sample_term},
    };
    entry["discrepancy"] = c.discrepancy ? nlohmann::json(*c.discrepancy) : nlohmann::json();
    entry["v_i"] = c.v_i ? nlohmann::json(*c.v_i) : nlohmann::json();
    clients.push_back(entry);
  }
  nlohmann::json out = {
      {"p", report.p},
      {"partial", report.partial},
      {"mean_empirical_loss", report.mean_empirical_loss},
      {"mean_sample_term", report.mean_sample_term},
      {"clients", clients},
  };
  out["mean_discrepancy"] =
      report.mean_discrepancy ? nlohmann::json(*report.mean_discrepancy) : nlohmann::json();
  return out;
}

}  // namespace

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRecord>& records) {
  os << "round,epoch_equivalent,aux_test_accuracy,target_test_accuracy,"
        "train_ce_loss,kd_loss,lambda_effective,cum_comm_upload,cum_comm_download\n";
  for (const auto& r : records) {
    os << r.round << ',' << fmt(r.epoch_equivalent) << ',' << fmt(r.aux_test_accuracy) << ','
       << fmt(r.target_test_accuracy) << ',' << fmt(r.train_ce_loss) << ',' << fmt(r.kd_loss)
       << ',' << fmt(r.lambda_effective) << ',' << r.cum_comm_upload << ','
       << r.cum_comm_download << '\n';
  }
}

ResolvedSeeds resolve_seeds(const ExperimentConfig& cfg, Method method, int seed_index) {
  ResolvedSeeds s;
  const auto r = static_cast<std::uint64_t>(seed_index);
  s.data = cfg.seed_data + r;
  s.partition = cfg.seed_partition + r;
  s.init = cfg.seed_init + r;
  s.train = derive_seed(cfg.seed_train + r, 10 + static_cast<std::uint64_t>(method));
  return s;
}

BoundReport measure_bound(const ExperimentConfig& cfg, Method method, const World& world,
                          const RunResult& result) {
  const bool has_target_model = method == Method::proposed ||
                                method == Method::fedavg_strong_only ||
                                (method == Method::feddf && cfg.feddf_large);
  std::vector<MeasuredClientLoss> losses;
  if (has_target_model) {
    for (const auto& c : world.clients) {
      if (!c.strong || c.data.labeled.size() == 0) continue;
      MeasuredClientLoss m;
      m.client_id = c.id;
      const Matrix logits = forward(world.target_spec, result.final_target, c.data.labeled.inputs);
      m.empirical_loss = cross_entropy(logits, c.data.labeled.labels);
      m.n_labeled = c.data.labeled.size();
      m.n_unlabeled = c.data.unlabeled.rows();
      losses.push_back(m);
    }
  }
  return bound_report(losses, cfg.bound_p, cfg.bound_discrepancy);
}

std::vector<RunArtifacts> run_sweep(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);

  std::vector<RunArtifacts> artifacts;
  for (Method method : cfg.methods) {
    for (int seed_index = 0; seed_index < cfg.num_seeds; ++seed_index) {
      ExperimentConfig run_cfg = cfg;
      const ResolvedSeeds seeds = resolve_seeds(cfg, method, seed_index);
      run_cfg.seed_data = seeds.data;
      run_cfg.seed_partition = seeds.partition;
      run_cfg.seed_init = seeds.init;
      run_cfg.seed_train = seeds.train;

      World world = build_world(run_cfg);
      // The engine consumes a copy; keep ours for the bound measurement.
      RunResult result = run_method(run_cfg, method, world);

      RunArtifacts art;
      art.method = method;
      art.seed_index = seed_index;
      art.bound = measure_bound(run_cfg, method, world, result);

      const std::string stem = method_to_string(method) + "_seed" + std::to_string(seed_index);
      art.csv_path = out_dir + "/" + stem + ".csv";
      art.json_path = out_dir + "/" + stem + ".json";

      {
        std::ofstream csv(art.csv_path, std::ios::binary);
        if (!csv) throw std::runtime_error("cannot write " + art.csv_path);
        write_metrics_csv(csv, result.records);
      }
      {
        const MetricsRecord& last = result.records.back();
        nlohmann::json summary = {
            {"version", kVersionStamp},
            {"method", method_to_string(method)},
            {"seed_index", seed_index},
            {"seeds",
             {{"data", seeds.data},
              {"partition", seeds.partition},
              {"init", seeds.init},
              {"train", seeds.train}}},
            {"final",
             {{"round", last.round},
              {"epoch_equivalent", last.epoch_equivalent},
              {"aux_test_accuracy", last.aux_test_accuracy},
              {"target_test_accuracy", last.target_test_accuracy},
              {"train_ce_loss", last.train_ce_loss},
              {"kd_loss", last.kd_loss},
              {"lambda_effective", last.lambda_effective},
              {"cum_comm_upload", last.cum_comm_upload},
              {"cum_comm_download", last.cum_comm_download}}},
            {"skipped_target_rounds", result.skipped_target_rounds},
            {"comm_report", comm_report_json(result.comm_report)},
            {"bound_report", bound_report_json(art.bound)},
            {"config", save_config(run_cfg)},
        };
        std::ofstream json_out(art.json_path, std::ios::binary);
        if (!json_out) throw std::runtime_error("cannot write " + art.json_path);
        json_out << summary.dump(2) << '\n';
      }

      art.result = std::move(result);
      artifacts.push_back(std::move(art));
    }
  }
  return artifacts;
}

void export_world(const ExperimentConfig& cfg, const std::string& dir) {
  cfg.validate();
  std::filesystem::create_directories(dir);
  const World world = build_world(cfg);

  SyntheticConfig scfg;
  scfg.num_classes = cfg.num_classes;
  scfg.input_dim = cfg.input_dim;
  scfg.train_per_class = cfg.samples_per_class;
  scfg.test_per_class = cfg.test_per_class;
  scfg.separation = cfg.separation;
  const SyntheticDataset synth = generate_synthetic(scfg, cfg.seed_data);

  auto open = [&](const std::string& name) {
    std::ofstream os(dir + "/" + name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + dir + "/" + name);
    return os;
  };

  {
    auto os = open("train.txt");
    export_dataset(os, synth.train);
  }
  {
    auto os = open("test.txt");
    export_dataset(os, world.test);
  }
  if (world.pool.size() > 0) {
    auto os = open("public_pool.txt");
    if (world.pool.labeled()) {
      Dataset pool;
      pool.inputs = world.pool.inputs;
      pool.labels = *world.pool.labels;
      pool.num_classes = cfg.num_classes;
      export_dataset(os, pool);
    } else {
      export_inputs(os, world.pool.inputs);
    }
  }
  for (const auto& c : world.clients) {
    auto os = open("client_" + std::to_string(c.id) + ".txt");
    export_dataset(os, c.data.labeled);
    export_inputs(os, c.data.unlabeled);
  }
}

}  // namespace fedkd
