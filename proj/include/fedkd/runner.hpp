#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fedkd/analysis.hpp"
#include "fedkd/config.hpp"
#include "fedkd/protocols.hpp"

namespace fedkd {

inline constexpr const char* kVersionStamp = "fedkd 0.1.0";

// Stable CSV schema: header row, comma-separated, LF line endings, doubles
// printed with round-trip precision.
void write_metrics_csv(std::ostream& os, const std::vector<MetricsRecord>& records);

struct RunArtifacts {
  Method method = Method::proposed;
  int seed_index = 0;
  std::string csv_path;
  std::string json_path;
  RunResult result;
  BoundReport bound;
};

// Seeds actually used by one (method, repetition) run. Data, partition and
// init seeds depend only on the repetition so methods stay paired; the train
// seed is additionally method-specific.
struct ResolvedSeeds {
  std::uint64_t data = 0;
  std::uint64_t partition = 0;
  std::uint64_t init = 0;
  std::uint64_t train = 0;
};
ResolvedSeeds resolve_seeds(const ExperimentConfig& cfg, Method method, int seed_index);

// Executes every (method, seed) pair of the sweep and writes one CSV and one
// JSON summary per run into out_dir.
std::vector<RunArtifacts> run_sweep(const ExperimentConfig& cfg, const std::string& out_dir);

// Bound terms of the strong clients, measured with the final target model on
// each client's labeled local data. Empty for methods that do not train a
// parameter-averaged target model.
BoundReport measure_bound(const ExperimentConfig& cfg, Method method, const World& world,
                          const RunResult& result);

// World export for external inspection (train/test/pool plus per-client
// labeled and unlabeled files).
void export_world(const ExperimentConfig& cfg, const std::string& dir);

}  // namespace fedkd
