#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "treebvm/bvm.hpp"
#include "treebvm/mcmc.hpp"

namespace treebvm {

// Flat view of the JSON experiment config. Every tunable constant appears
// here with its default; the JSON file only has to name what it changes.
struct ExperimentConfig {
  // dataset
  std::string dataset_family = "f0_lipschitz";
  int n = 256;
  int p = 1;
  double alpha = 1.0;
  double const_value = 0.0;
  std::uint64_t dataset_seed = 1;
  // weight
  std::string weight_family = "one";
  double gamma = 1.0;
  // prior
  TreePriorSpec tree_prior;
  LeafPrior leaf_prior;
  int n_trees = 1;
  // sampler
  long iterations = 1000;
  long burn_in = 100;
  int thin = 1;
  int max_depth = 20;
  std::uint64_t chain_seed = 0;
  MoveWeights move_weights;
  // experiment
  std::string mode = "sample";
  int n_reps = 1;
  double nominal_level = 0.9;
  CenteringMode centering = CenteringMode::per_partition_psi_hat_T;
  double M = 1.0;
  double M_n = 0.0;  // 0 means sqrt(ln n)
  double M2 = 1.0;
  double D = 1.0;
  double min_ess = 400.0;
  int threads = 0;  // 0 means TREEBVM_THREADS or 1
  int selfsim_budget = 200;
  int regularity_max_s = 6;
  std::vector<int> n_grid;
  // output
  std::string out_dir = "out";
  bool write_forests = false;
  bool write_svg = false;
};

// Full schema and cross-field validation of the JSON text. Returns one
// "field.path: requirement" line per problem; empty means usable.
std::vector<std::string> validate_experiment_json(const std::string& text);

// Parse after validation; throws ConfigInvalid carrying the first diagnostic.
ExperimentConfig parse_experiment_config(const std::string& text);

// Apply key=value dotted-path overrides (values parsed as JSON literals,
// falling back to strings) and return the rewritten JSON text.
std::string apply_overrides(const std::string& text, const std::vector<std::string>& sets);

// Canonical serialization of the effective config: sorted keys, every field
// present, round-trips through parse_experiment_config.
std::string experiment_config_to_json(const ExperimentConfig& config);

// Hex SHA-1 of a git blob holding exactly these bytes (what `git hash-object`
// prints for the file).
std::string git_blob_sha1(const std::string& bytes);

// Views of the embedded sub-configs.
SamplerConfig sampler_from(const ExperimentConfig& config);
BvmExperimentConfig bvm_config_from(const ExperimentConfig& config);
CoverageConfig coverage_config_from(const ExperimentConfig& config);
ConcentrationConfig concentration_config_from(const ExperimentConfig& config);

}  // namespace treebvm
