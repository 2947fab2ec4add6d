#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "treebvm/dataset.hpp"
#include "treebvm/mcmc.hpp"

namespace treebvm {

// How tau = sqrt(n)(Psi(f) - center) is centered.
enum class CenteringMode { per_partition_psi_hat_T, global_psi_n, posterior_mean };

std::string centering_mode_name(CenteringMode mode);
CenteringMode centering_mode_from_name(const std::string& name);

// One tau per draw. The two oracle modes need the simulation truth
// (MissingTruth otherwise); per_partition_psi_hat_T centers each draw at the
// psi_hat of its own merged ensemble partition, global_psi_n at the
// partition-free psi_n, posterior_mean at the empirical mean of the Psi draws.
std::vector<double> centered_draws(const std::vector<PosteriorDraw>& draws, const Dataset& data,
                                   const SimulationTruth* truth, const FunctionalWeight& weight,
                                   CenteringMode mode);

struct GaussianDistance {
  double ks = 0.0;
  double w1 = 0.0;
};

// Empirical distance of tau_draws to N(0, V0). Throws TooFewDraws below 100
// draws and ConfigInvalid when V0 is not positive.
GaussianDistance distance_to_gaussian(const std::vector<double>& tau_draws, double V0);

struct ConcentrationFractions {
  double frac_regular = 0.0;  // merged partition passes is_n_regular
  double frac_small_k = 0.0;  // merged leaf count <= K_n
  double frac_both = 0.0;
  int k_n = 0;
};

// Fraction of draws whose merged partition is n-regular and whose merged
// leaf count stays below the concentration-lemma budget K_n(M2).
ConcentrationFractions lemma1_concentration(const std::vector<PosteriorDraw>& draws,
                                            const Dataset& design, double alpha, double M,
                                            double M_n, double M2 = 1.0);

struct BvmExperimentConfig {
  std::string truth_family = "f0_lipschitz";
  double alpha = 1.0;
  double const_value = 0.0;
  int n = 256;
  int p = 1;
  std::uint64_t data_seed = 1;
  std::string weight_family = "one";
  double gamma = 1.0;
  SamplerConfig sampler;
  CenteringMode centering = CenteringMode::per_partition_psi_hat_T;
  double M = 1.0;        // regularity constant
  double M_n = 0.0;      // 0 means use sqrt(ln n)
  double M2 = 1.0;       // leaf-budget constant in K_n
  double min_ess = 400.0;
};

struct BvmReport {
  int n = 0;
  double alpha = 1.0;
  double gamma = 1.0;
  double V0 = 1.0;  // ||a||_L^2
  std::vector<double> tau_draws;
  double ks_stat = 0.0;
  double w1_stat = 0.0;
  CenteringMode centering_mode = CenteringMode::per_partition_psi_hat_T;
  ConcentrationFractions concentration;
  double ess_psi = 0.0;
  bool conclusive = true;  // ess_psi >= the configured floor
  ChainDiagnostics diagnostics;
};

// Simulate, sample, center, and measure: the full single-dataset experiment.
BvmReport run_bvm_experiment(const BvmExperimentConfig& config);

struct CredibleInterval {
  double lo = 0.0;
  double hi = 0.0;
};

// Equal-tailed interval of the draws at the given level in (0, 1).
CredibleInterval equal_tailed_interval(std::vector<double> psi_draws, double level);

struct WidthSummary {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct CoverageConfig {
  std::string truth_family = "f0_lipschitz";
  double alpha = 1.0;
  double const_value = 0.0;
  int n = 256;
  int p = 1;
  std::string weight_family = "one";
  double gamma = 1.0;
  SamplerConfig sampler;
  double nominal_level = 0.9;
  int n_reps = 1;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct CoverageResult {
  double nominal_level = 0.9;
  int n_reps = 0;
  int hits = 0;
  double empirical_coverage = 0.0;
  WidthSummary interval_widths;
  double min_ess = 0.0;  // smallest ESS(Psi) across replications
};

// Repeated fresh-data credible-interval experiment; replications run on a
// small thread pool with streams derived from (seed, replication index).
CoverageResult coverage_experiment(const CoverageConfig& config);

struct ConcentrationConfig {
  std::string truth_family = "f0_lipschitz";
  double alpha = 1.0;
  double const_value = 0.0;
  int p = 1;
  SamplerConfig sampler;
  std::uint64_t seed = 0;
};

struct ConcentrationRow {
  int n = 0;
  double mean_error = 0.0;  // posterior mean of ||f - f0||_L
  double epsilon = 0.0;     // epsilon_n at this n
  double ratio = 0.0;       // mean_error / epsilon
  double ess = 0.0;         // ESS of the per-draw error series
};

// Posterior contraction table over a grid of sample sizes.
std::vector<ConcentrationRow> laplace_concentration_check(const std::vector<int>& grid_of_n,
                                                          const ConcentrationConfig& config);

}  // namespace treebvm
