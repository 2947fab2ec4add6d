#include "treebvm/approx.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "treebvm/errors.hpp"
#include "treebvm/priors.hpp"

namespace treebvm {

namespace {

void require_same_length(std::size_t got, std::size_t want, const char* where) {
  if (got != want) {
    throw LengthMismatch(std::string(where) + ": expected " + std::to_string(want) +
                         " values, got " + std::to_string(got));
  }
}

void require_truth(const SimulationTruth& truth, int n, const char* where) {
  if (truth.f0_values.size() != static_cast<std::size_t>(n) ||
      truth.eps.size() != static_cast<std::size_t>(n)) {
    throw MissingTruth(std::string(where) + ": needs simulation truth for all " +
                       std::to_string(n) + " design points");
  }
}

double cell_mean(const std::vector<double>& values, const std::vector<int>& members) {
  double sum = 0.0;
  for (int i : members) sum += values[static_cast<std::size_t>(i)];
  return sum / static_cast<double>(members.size());
}

}  // namespace

std::vector<double> StepFunction::values() const {
  require_same_length(beta.size(), static_cast<std::size_t>(partition.leaf_count()),
                      "StepFunction::values");
  std::vector<double> out(static_cast<std::size_t>(partition.n()));
  for (int i = 0; i < partition.n(); ++i) {
    out[static_cast<std::size_t>(i)] = beta[static_cast<std::size_t>(partition.cell_of(i))];
  }
  return out;
}

std::vector<double> ForestFunction::values() const {
  require_same_length(betas.size(), ensemble.trees.size(), "ForestFunction::values");
  if (ensemble.trees.empty()) throw LengthMismatch("ForestFunction::values: empty ensemble");
  std::vector<double> out(static_cast<std::size_t>(ensemble.trees.front().n()), 0.0);
  for (std::size_t t = 0; t < ensemble.trees.size(); ++t) {
    const TreePartition& tree = ensemble.trees[t];
    require_same_length(betas[t].size(), static_cast<std::size_t>(tree.leaf_count()),
                        "ForestFunction::values");
    require_same_length(out.size(), static_cast<std::size_t>(tree.n()), "ForestFunction::values");
    for (int i = 0; i < tree.n(); ++i) {
      out[static_cast<std::size_t>(i)] += betas[t][static_cast<std::size_t>(tree.cell_of(i))];
    }
  }
  return out;
}

double empirical_norm(const std::vector<double>& values_f, const std::vector<double>& values_g) {
  require_same_length(values_g.size(), values_f.size(), "empirical_norm");
  if (values_f.empty()) throw LengthMismatch("empirical_norm: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < values_f.size(); ++i) {
    const double d = values_f[i] - values_g[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(values_f.size()));
}

double empirical_inner_product(const std::vector<double>& values_f,
                               const std::vector<double>& values_g) {
  require_same_length(values_g.size(), values_f.size(), "empirical_inner_product");
  if (values_f.empty()) throw LengthMismatch("empirical_inner_product: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < values_f.size(); ++i) sum += values_f[i] * values_g[i];
  return sum / static_cast<double>(values_f.size());
}

Projection project_onto_cells(const std::vector<double>& values,
                              const std::vector<std::vector<int>>& cells, int n) {
  require_same_length(values.size(), static_cast<std::size_t>(n), "project_onto_cells");
  Projection out;
  out.values.assign(values.size(), 0.0);
  out.per_cell_means.reserve(cells.size());
  for (const auto& members : cells) {
    if (members.empty()) throw EmptyCell("project_onto_cells: empty cell");
    const double mean = cell_mean(values, members);
    out.per_cell_means.push_back(mean);
    for (int i : members) out.values[static_cast<std::size_t>(i)] = mean;
  }
  return out;
}

Projection project_onto_partition(const std::vector<double>& values,
                                  const TreePartition& partition) {
  return project_onto_cells(values, partition.cells(), partition.n());
}

double psi(const std::vector<double>& values_f, const FunctionalWeight& weight) {
  require_same_length(values_f.size(), weight.a_values.size(), "psi");
  return empirical_inner_product(weight.a_values, values_f);
}

LanDecomposition lan_decomposition(const std::vector<double>& values_f, const Dataset& data,
                                   const SimulationTruth& truth) {
  require_same_length(values_f.size(), static_cast<std::size_t>(data.n), "lan_decomposition");
  require_truth(truth, data.n, "lan_decomposition");
  LanDecomposition out;
  double quad_sum = 0.0;
  for (int i = 0; i < data.n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double rf = data.y[k] - values_f[k];
    const double r0 = data.y[k] - truth.f0_values[k];
    out.delta_n += -0.5 * (rf * rf - r0 * r0);
    const double h = values_f[k] - truth.f0_values[k];
    quad_sum += h * h;
    out.stoch_term += truth.eps[k] * h;
  }
  out.quad_term = -0.5 * quad_sum;
  return out;
}

CenteringPair centering_estimators(const std::vector<std::vector<int>>& cells,
                                   const Dataset& data, const SimulationTruth& truth,
                                   const FunctionalWeight& weight) {
  require_truth(truth, data.n, "centering_estimators");
  require_same_length(weight.a_values.size(), static_cast<std::size_t>(data.n),
                      "centering_estimators");
  const Projection f0_proj = project_onto_cells(truth.f0_values, cells, data.n);
  const Projection a_proj = project_onto_cells(weight.a_values, cells, data.n);
  CenteringPair out;
  out.psi_hat_T =
      psi(f0_proj.values, weight) + empirical_inner_product(truth.eps, a_proj.values);
  out.psi_n = psi(truth.f0_values, weight) + empirical_inner_product(truth.eps, weight.a_values);
  return out;
}

CenteringPair centering_estimators(const TreePartition& partition, const Dataset& data,
                                   const SimulationTruth& truth,
                                   const FunctionalWeight& weight) {
  return centering_estimators(partition.cells(), data, truth, weight);
}

double no_bias_value(const std::vector<std::vector<int>>& cells, const Dataset& data,
                     const SimulationTruth& truth, const FunctionalWeight& weight) {
  require_truth(truth, data.n, "no_bias_value");
  require_same_length(weight.a_values.size(), static_cast<std::size_t>(data.n), "no_bias_value");
  const Projection f0_proj = project_onto_cells(truth.f0_values, cells, data.n);
  const Projection a_proj = project_onto_cells(weight.a_values, cells, data.n);
  double sum = 0.0;
  for (int i = 0; i < data.n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    sum += (weight.a_values[k] - a_proj.values[k]) * (truth.f0_values[k] - f0_proj.values[k]);
  }
  return std::sqrt(static_cast<double>(data.n)) * (sum / static_cast<double>(data.n));
}

double no_bias_value(const TreePartition& partition, const Dataset& data,
                     const SimulationTruth& truth, const FunctionalWeight& weight) {
  return no_bias_value(partition.cells(), data, truth, weight);
}

std::vector<double> local_variance(const std::vector<double>& values_f0,
                                   const std::vector<std::vector<int>>& cells) {
  std::vector<double> out;
  out.reserve(cells.size());
  for (const auto& members : cells) {
    if (members.empty()) throw EmptyCell("local_variance: empty cell");
    const double mean = cell_mean(values_f0, members);
    double sum = 0.0;
    for (int i : members) {
      const double d = values_f0[static_cast<std::size_t>(i)] - mean;
      sum += d * d;
    }
    out.push_back(sum / static_cast<double>(members.size()));
  }
  return out;
}

std::vector<double> local_variance(const std::vector<double>& values_f0,
                                   const TreePartition& partition) {
  require_same_length(values_f0.size(), static_cast<std::size_t>(partition.n()),
                      "local_variance");
  return local_variance(values_f0, partition.cells());
}

namespace {

// Folds one partition into the certificate if its diameter lies in (0, D].
void test_partition_for_certificate(const TreePartition& partition, const Dataset& design,
                                    const SimulationTruth& truth, SelfSimCertificate& cert) {
  const DiameterSummary diam = diameter(design, partition);
  if (diam.total <= 0.0 || diam.total > cert.D) return;
  const Projection f0_proj = project_onto_partition(truth.f0_values, partition);
  const double err = empirical_norm(f0_proj.values, truth.f0_values);
  const double ratio = (err * err) / std::pow(diam.total, 2.0 * cert.alpha);
  cert.tested_partitions += 1;
  cert.min_ratio = std::min(cert.min_ratio, ratio);
}

}  // namespace

SelfSimCertificate self_similarity_certificate(const Dataset& design,
                                               const SimulationTruth& truth, double alpha,
                                               double M, double D, int partition_budget,
                                               Rng& rng) {
  if (alpha <= 0.0 || M <= 0.0 || D <= 0.0 || partition_budget < 0) {
    throw ConfigInvalid("self_similarity_certificate: alpha, M, D must be positive");
  }
  require_truth(truth, design.n, "self_similarity_certificate");
  SelfSimCertificate cert;
  cert.alpha = alpha;
  cert.M = M;
  cert.D = D;

  for (int s = 1;; ++s) {
    const double leaves = std::pow(2.0, static_cast<double>(s) * design.p);
    if (leaves > static_cast<double>(design.n)) break;
    test_partition_for_certificate(build_kd_tree(design, s), design, truth, cert);
  }

  if (design.p == 1) {
    for (int K = 1; K <= design.n; ++K) {
      test_partition_for_certificate(equivalent_blocks(design, K), design, truth, cert);
    }
  }

  const GaltonWatsonPrior gw = make_chipman_prior(0.95, 2.0);
  for (int b = 0; b < partition_budget; ++b) {
    test_partition_for_certificate(sample_gw_tree(gw, design, rng), design, truth, cert);
  }

  if (cert.tested_partitions == 0) {
    cert.min_ratio = 0.0;
    cert.verdict = false;
  } else {
    cert.verdict = cert.min_ratio >= M;
  }
  return cert;
}

int kn_theorem(int n, double alpha) {
  if (n < 2 || alpha <= 0.0) throw ConfigInvalid("kn_theorem: needs n >= 2 and alpha > 0");
  const double t = std::pow(static_cast<double>(n) / std::log(static_cast<double>(n)),
                            1.0 / (2.0 * alpha + 1.0));
  return std::max(1, static_cast<int>(std::floor(t + 1e-9)));
}

double epsilon_n(int n, double alpha, int p) {
  if (n < 2 || alpha <= 0.0 || p < 1) {
    throw ConfigInvalid("epsilon_n: needs n >= 2, alpha > 0, p >= 1");
  }
  const double nn = static_cast<double>(n);
  return std::pow(nn, -alpha / (2.0 * alpha + p)) * std::sqrt(std::log(nn));
}

int kn_lemma1(int n, double alpha, int p, double M2) {
  if (M2 <= 0.0) throw ConfigInvalid("kn_lemma1: needs M2 > 0");
  const double eps = epsilon_n(n, alpha, p);
  const double t = M2 * static_cast<double>(n) * eps * eps / std::log(static_cast<double>(n));
  // The guard absorbs representation error when t is an exact integer
  // (n * eps_n^2 / ln n reduces to n^(p/(2 alpha + p))).
  return std::max(1, static_cast<int>(std::floor(t + 1e-9)));
}

}  // namespace treebvm
