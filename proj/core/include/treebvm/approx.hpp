#pragma once

#include <limits>
#include <vector>

#include "treebvm/dataset.hpp"
#include "treebvm/partition.hpp"
#include "treebvm/rng.hpp"

namespace treebvm {

// Step function: constant beta_k on each cell of a tree partition.
struct StepFunction {
  TreePartition partition;
  std::vector<double> beta;

  std::vector<double> values() const;
};

// Sum of per-tree step functions over a shared design.
struct ForestFunction {
  Ensemble ensemble;
  std::vector<std::vector<double>> betas;

  std::vector<double> values() const;
};

// sqrt((1/n) sum (f_i - g_i)^2) and the matching inner product (1/n) sum f_i g_i.
double empirical_norm(const std::vector<double>& values_f, const std::vector<double>& values_g);
double empirical_inner_product(const std::vector<double>& values_f,
                               const std::vector<double>& values_g);

// Cell-mean projection onto the step functions of a partition.
struct Projection {
  std::vector<double> values;          // projected function at the design points
  std::vector<double> per_cell_means;  // one mean per cell
};

Projection project_onto_cells(const std::vector<double>& values,
                              const std::vector<std::vector<int>>& cells, int n);
Projection project_onto_partition(const std::vector<double>& values,
                                  const TreePartition& partition);

// Psi(f) = (1/n) sum a(x_i) f(x_i).
double psi(const std::vector<double>& values_f, const FunctionalWeight& weight);

// delta_n = l_n(f) - l_n(f0) from the Gaussian log-likelihood of the observed
// responses; identically quad_term + stoch_term with
// quad_term = -(n/2)||f - f0||_L^2 and stoch_term = sum_i eps_i (f - f0)(x_i).
struct LanDecomposition {
  double delta_n = 0.0;
  double quad_term = 0.0;
  double stoch_term = 0.0;
};

LanDecomposition lan_decomposition(const std::vector<double>& values_f, const Dataset& data,
                                   const SimulationTruth& truth);

// psi_hat_T = Psi(f0^T) + W_n(a_T)/sqrt(n) with f0^T, a_T projected onto the
// partition; psi_n = Psi(f0) + W_n(a)/sqrt(n) is partition-free.
struct CenteringPair {
  double psi_hat_T = 0.0;
  double psi_n = 0.0;
};

CenteringPair centering_estimators(const std::vector<std::vector<int>>& cells,
                                   const Dataset& data, const SimulationTruth& truth,
                                   const FunctionalWeight& weight);
CenteringPair centering_estimators(const TreePartition& partition, const Dataset& data,
                                   const SimulationTruth& truth,
                                   const FunctionalWeight& weight);

// sqrt(n) <a - a_T, f0 - f0^T>_L.
double no_bias_value(const std::vector<std::vector<int>>& cells, const Dataset& data,
                     const SimulationTruth& truth, const FunctionalWeight& weight);
double no_bias_value(const TreePartition& partition, const Dataset& data,
                     const SimulationTruth& truth, const FunctionalWeight& weight);

// Per-cell population variance of f0 (divisor = cell occupancy).
std::vector<double> local_variance(const std::vector<double>& values_f0,
                                   const std::vector<std::vector<int>>& cells);
std::vector<double> local_variance(const std::vector<double>& values_f0,
                                   const TreePartition& partition);

// Tests ||f0^T - f0||_L^2 >= M diam(T)^(2 alpha) over an explicit partition
// family: every k-d tree, every equivalent-blocks partition (p = 1), and
// partition_budget Galton-Watson draws, all filtered to 0 < diam(T) <= D.
struct SelfSimCertificate {
  double alpha = 1.0;
  double M = 0.0;
  double D = 0.0;
  int tested_partitions = 0;
  double min_ratio = std::numeric_limits<double>::infinity();
  bool verdict = false;
};

SelfSimCertificate self_similarity_certificate(const Dataset& design,
                                               const SimulationTruth& truth, double alpha,
                                               double M, double D, int partition_budget,
                                               Rng& rng);

// K_n = floor((n/ln n)^(1/(2 alpha + 1))), the p=1 theorem calibration.
int kn_theorem(int n, double alpha);
// eps_n = n^(-alpha/(2 alpha + p)) sqrt(ln n).
double epsilon_n(int n, double alpha, int p);
// K_n = floor(M2 n eps_n^2 / ln n), the concentration-lemma calibration.
int kn_lemma1(int n, double alpha, int p, double M2 = 1.0);

}  // namespace treebvm
