#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace tmld {

struct ExperimentOptions {
  std::string out_dir;
  uint64_t seed = 1;
  unsigned jobs = 0;  // 0 = hardware concurrency
  bool desk_scale = true;
  bool svg = false;
};

// Fixed dataset for the funnel posterior (generator seed 20240601); shipped in
// data/funnel_data.csv and regenerated identically here.
std::vector<double> funnel_dataset();

// The funnel experiment's training stage: a long small-step ULA run thinned to
// 20000 points, then an order-3 monotone triangular map. Deterministic in the
// seed. Shared by the funnel preset and the acceptance suite.
struct FunnelTraining {
  std::shared_ptr<const class Target> target;
  std::shared_ptr<const class Map> map;
};
FunnelTraining funnel_trained_map(uint64_t seed, unsigned jobs);

// Mixture separatrix depths: per replicate, the minimum pushforward
// log-density along inter-mode segments for maps trained on 200 and on 2000
// exact samples.
struct SeparatrixPair {
  double min_small = 0;
  double min_large = 0;
};
std::vector<SeparatrixPair> mixture_separatrix_depths(uint64_t seed, int n_pairs, unsigned jobs);

// Named experiment presets: banana-bias, funnel, rosenbrock, mixture.
// Writes chains/tables/report.json plus a MANIFEST of content hashes into
// opts.out_dir. Throws InvalidParameterError for unknown names.
void run_experiment(const std::string& name, const ExperimentOptions& opts);

// Config-file entry point: {"preset": "...", "seed": ..., "desk_scale": ...,
// "svg": ...}; explicit CLI options win over config values.
void run_experiment_config(const nlohmann::json& config, ExperimentOptions opts);

// sha256 of every regular file under out_dir (except the manifest itself),
// sorted by relative path.
void write_manifest(const std::string& out_dir);

}  // namespace tmld
