#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "treebvm/approx.hpp"
#include "treebvm/dataset.hpp"
#include "treebvm/partition.hpp"
#include "treebvm/priors.hpp"
#include "treebvm/rng.hpp"

namespace treebvm {

struct MoveWeights {
  double grow = 0.4;
  double prune = 0.4;
  double change = 0.2;
};

struct SamplerConfig {
  TreePriorSpec tree_prior;
  LeafPrior leaf_prior;
  int n_trees = 1;
  MoveWeights move_weights;
  long iterations = 0;
  long burn_in = 0;
  int thin = 1;
  std::uint64_t seed = 0;
  int max_depth = 20;
};

// Throws ConfigInvalid. The geometric split probability needs alpha > 1/n,
// dense-Sigma leaf priors cannot follow structure moves, and iterations must
// cover burn_in (equality yields an empty draw list).
void validate_sampler_config(const SamplerConfig& config, const Dataset& data);

// One tree of the sampler state: structure plus current leaf values.
struct TreeState {
  TreePartition partition;
  std::vector<double> beta;
};

TreePartition root_partition(const Dataset& design);

// Log of the residual likelihood with leaf values integrated out under the
// leaf prior (unit noise variance). Gaussian priors integrate in closed form
// through a K x K solve; Laplace priors leaf by leaf through the Gaussian CDF.
double leaf_marginal_loglik(const TreePartition& partition,
                            const std::vector<double>& residuals, const LeafPrior& prior);

// Exact draw from the leaf-value full conditional given the structure.
std::vector<double> draw_leaf_values(const TreePartition& partition,
                                     const std::vector<double>& residuals,
                                     const LeafPrior& prior, Rng& rng);

// Explicit structure moves; node indices refer to partition.nodes().
struct GrowMove {
  int leaf_node = -1;
  int dim = 0;
  double value = 0.0;
};

struct PruneMove {
  int internal_node = -1;
};

struct ChangeMove {
  int internal_node = -1;
  int dim = 0;
  double value = 0.0;
};

// Log MH acceptance ratios (structure prior ratio + proposal ratio + marginal
// likelihood ratio); -infinity for invalid moves. mh_step accepts with exactly
// these numbers.
double grow_log_ratio(const TreePartition& partition, const GrowMove& move,
                      const SamplerConfig& config, const Dataset& design,
                      const std::vector<double>& residuals);
double prune_log_ratio(const TreePartition& partition, const PruneMove& move,
                       const SamplerConfig& config, const Dataset& design,
                       const std::vector<double>& residuals);
double change_log_ratio(const TreePartition& partition, const ChangeMove& move,
                        const SamplerConfig& config, const Dataset& design,
                        const std::vector<double>& residuals);

// Apply a move, returning the new partition. Throw EmptyCell/BadDimension on
// moves the ratio functions would have scored -infinity.
TreePartition apply_grow(const TreePartition& partition, const GrowMove& move,
                         const Dataset& design);
TreePartition apply_prune(const TreePartition& partition, const PruneMove& move,
                          const Dataset& design);
TreePartition apply_change(const TreePartition& partition, const ChangeMove& move,
                           const Dataset& design);

enum class MoveKind { grow, prune, change };

struct MhOutcome {
  MoveKind kind = MoveKind::grow;
  bool accepted = false;
  double log_ratio = 0.0;
};

// One structure proposal (grow/prune/change by move_weights) followed by an
// exact leaf-value redraw. data.y is what this tree regresses on (the partial
// residuals under backfitting). Invalid proposals auto-reject.
MhOutcome mh_step(TreeState& state, const SamplerConfig& config, const Dataset& data,
                  Rng& rng);

struct PosteriorDraw {
  ForestFunction forest;
  std::vector<double> fitted_values;
  double log_posterior_unnorm = 0.0;
  double psi_value = 0.0;
  long iteration = 0;
};

struct AcceptanceRates {
  double grow = 0.0;
  double prune = 0.0;
  double change = 0.0;
};

struct LeafCountSummary {
  double mean = 0.0;
  int min = 0;
  int max = 0;
};

struct ChainDiagnostics {
  AcceptanceRates acceptance_rates;
  double ess_psi = 0.0;  // 0 when no weight is configured
  LeafCountSummary leaf_counts;  // total leaves across trees per emitted draw
  long draws_emitted = 0;
};

using DrawSink = std::function<void(const PosteriorDraw&)>;

// Runs the chain (plain MH for one tree, Bayesian backfitting for several),
// handing each post-burn-in thinned draw to the sink. Deterministic given
// config.seed.
ChainDiagnostics run_chain_stream(const SamplerConfig& config, const Dataset& data,
                                  const FunctionalWeight* weight, const DrawSink& sink);

std::pair<std::vector<PosteriorDraw>, ChainDiagnostics> run_chain(
    const SamplerConfig& config, const Dataset& data,
    const FunctionalWeight* weight = nullptr);

// Brute-force enumeration of every reachable structure with its posterior
// weight (tree prior x leaf marginal), the oracle for small-space chain
// checks. Throws EnumerationCapExceeded past max_structures.
struct EnumeratedPosterior {
  std::vector<TreePartition> structures;
  std::vector<double> log_weight;
  std::vector<double> probability;
};

EnumeratedPosterior enumerate_structure_posterior(const Dataset& data,
                                                  const SamplerConfig& config,
                                                  int max_structures = 100000);

// Shifts every tree's leaf values by s/(T sqrt(n)) and compares the joint
// leaf-prior log ratio against the closed form: returns the identity residual
// for gaussian_scaled leaves and the slack (bound - |ratio|, nonnegative when
// the bound holds) for laplace_scaled leaves. Requires a == 1.
double ensemble_shift_check(const PosteriorDraw& draw, double s,
                            const FunctionalWeight& weight, const LeafPrior& leaf_prior);

}  // namespace treebvm
