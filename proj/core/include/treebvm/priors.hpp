#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "treebvm/dataset.hpp"
#include "treebvm/partition.hpp"
#include "treebvm/rng.hpp"

namespace treebvm {

// Zero-truncated Poisson prior on the leaf count: pi(K) = lambda^K / ((e^lambda - 1) K!).
struct TreeSizePrior {
  double lambda = 1.0;
};

TreeSizePrior make_tree_size_prior(double lambda);

double log_prior_tree_size(int K, double lambda);

// Uniform prior over distinct K-leaf topologies of a design. Below the cap
// (n*K recursion states) the count |V^K| is enumerated exactly; above it the
// prior is used unnormalized (log|V^K| treated as 0), which only shifts the
// density by a K-dependent constant that samplers never compare across.
struct TopologyPriorValue {
  double log_prior = 0.0;
  bool unnormalized = false;
};

inline constexpr long long kTopologyEnumerationCap = 5000;

// Exact log |V^K(design)|; throws EnumerationCapExceeded when n*K > cap.
double log_topology_count(const Dataset& design, int K, long long cap = kTopologyEnumerationCap);

TopologyPriorValue log_prior_topology_uniform(const TreePartition& partition,
                                              const Dataset& design,
                                              bool require_normalized = false,
                                              long long cap = kTopologyEnumerationCap);

// Galton-Watson branching prior on topologies. A node at layer l splits with
// probability alpha/(1+l)^delta (chipman) or alpha^l (geometric; the root
// splits surely), then draws the split dimension uniformly from the available
// directions and the split value uniformly from the valid observed values.
struct GaltonWatsonPrior {
  enum class Variant { chipman, geometric };
  Variant variant = Variant::chipman;
  double alpha = 0.95;
  double delta = 2.0;  // chipman only
};

GaltonWatsonPrior make_chipman_prior(double alpha, double delta);
GaltonWatsonPrior make_geometric_prior(double alpha);

double gw_split_probability(int layer, const GaltonWatsonPrior& prior);

TreePartition sample_gw_tree(const GaltonWatsonPrior& prior, const Dataset& design,
                             Rng& rng, int max_depth = 20);

// Exact log-density of a topology under the Galton-Watson prior (including
// the split dimension/value factors). -inf for topologies outside the
// prior's support (deeper than max_depth, or an unsplit root under the
// geometric variant).
double log_gw_tree_prior(const TreePartition& partition, const Dataset& design,
                         const GaltonWatsonPrior& prior, int max_depth = 20);

// The two tree-prior families the samplers accept.
struct TreePriorSpec {
  enum class Family { poisson_uniform, galton_watson };
  Family family = Family::galton_watson;
  TreeSizePrior size;     // poisson_uniform
  GaltonWatsonPrior gw;   // galton_watson
  int max_depth = 20;
};

double log_tree_prior(const TreePartition& partition, const Dataset& design,
                      const TreePriorSpec& spec);

// Prior on the leaf-value vector. "gaussian" is N_K(0, Sigma) with either
// Sigma = sigma2 * I at any K or a fixed dense matrix; "gaussian_scaled" uses
// Sigma = K * I for the tree's own leaf count; "laplace" is iid Laplace(lambda);
// "laplace_scaled" uses lambda = c_lambda / sqrt(K).
struct LeafPrior {
  enum class Kind { gaussian, gaussian_scaled, laplace, laplace_scaled };
  Kind kind = Kind::gaussian;
  double sigma2 = 1.0;
  std::vector<double> sigma_dense;  // row-major fixed_k x fixed_k; empty = iid
  int fixed_k = 0;
  double lambda_leaf = 1.0;
  double c_lambda = 1.0;

  bool is_gaussian() const { return kind == Kind::gaussian || kind == Kind::gaussian_scaled; }
  // Per-leaf prior variance for the iid Gaussian kinds (K = current leaf count).
  double gaussian_variance(int K) const {
    return kind == Kind::gaussian_scaled ? static_cast<double>(K) : sigma2;
  }
  double laplace_rate(int K) const;
};

LeafPrior make_gaussian_leaf_prior(double sigma2 = 1.0);
// Dense-covariance Gaussian; validates the eigenvalue window
// c < lambda_min(Sigma) and lambda_max(Sigma) <= c2 * n.
LeafPrior make_gaussian_leaf_prior(std::vector<double> Sigma, int K, int n,
                                   double c = 0.01, double c2 = 1.0);
LeafPrior make_gaussian_scaled_leaf_prior();
LeafPrior make_laplace_leaf_prior(double lambda = 1.0);
LeafPrior make_laplace_scaled_leaf_prior(double c_lambda = 1.0);

double log_leaf_prior(const std::vector<double>& beta, const LeafPrior& prior);

// log pi(beta) - log pi(beta_t) - [(t^2/2n) a'Sigma^-1 a - (t/sqrt(n)) a'Sigma^-1 beta]
// with beta_t = beta - t a / sqrt(n); identically 0 up to rounding.
double gaussian_change_of_measure_residual(const std::vector<double>& beta,
                                           const std::vector<double>& a_proj, double t,
                                           const std::vector<double>& Sigma, int n);

// Exact log pi(beta) - log pi(beta_t) under iid Laplace(lambda) together with
// the bound (|t| lambda / sqrt(n)) * ||a||_1 that dominates it two-sidedly.
std::pair<double, double> laplace_change_of_measure_bound(const std::vector<double>& beta,
                                                          const std::vector<double>& a_proj,
                                                          double t, double lambda_leaf,
                                                          int n);

}  // namespace treebvm
