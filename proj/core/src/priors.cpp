#include "treebvm/priors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include <Eigen/Dense>

#include "treebvm/errors.hpp"
#include "treebvm/stats.hpp"

namespace treebvm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

Eigen::MatrixXd as_matrix(const std::vector<double>& flat, int K) {
  if (flat.size() != static_cast<std::size_t>(K) * K)
    throw DimensionMismatch("covariance matrix is not K x K");
  Eigen::MatrixXd m(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) m(i, j) = flat[static_cast<std::size_t>(i) * K + j];
  return m;
}

}  // namespace

TreeSizePrior make_tree_size_prior(double lambda) {
  if (!(lambda > 0.0))
    throw ConfigInvalid("tree size prior: lambda must be positive");
  return TreeSizePrior{lambda};
}

double log_prior_tree_size(int K, double lambda) {
  if (K < 1) throw ConfigInvalid("log_prior_tree_size: K must be >= 1");
  if (!(lambda > 0.0))
    throw ConfigInvalid("log_prior_tree_size: lambda must be positive");
  return K * std::log(lambda) - log_expm1(lambda) - std::lgamma(K + 1.0);
}

namespace {

// log of the number of distinct topologies with exactly K leaves whose
// splits are valid over `members`. Distinct (j, c, left-count) triples are
// distinct topologies even when they induce the same cells.
double count_topologies(const Dataset& design, const std::vector<int>& members, int K,
                        std::map<std::pair<int, std::vector<int>>, double>& memo) {
  if (K == 1) return 0.0;
  if (static_cast<std::size_t>(K) > members.size()) return kNegInf;
  const auto key = std::make_pair(K, members);
  if (auto it = memo.find(key); it != memo.end()) return it->second;

  std::vector<double> terms;
  for (int j : available_dims(design, members)) {
    for (double c : valid_split_values(design, members, j)) {
      std::vector<int> left, right;
      for (int i : members)
        (design.coord(i, j) <= c ? left : right).push_back(i);
      for (int kl = 1; kl < K; ++kl) {
        if (static_cast<std::size_t>(kl) > left.size()) break;
        if (static_cast<std::size_t>(K - kl) > right.size()) continue;
        const double l = count_topologies(design, left, kl, memo);
        const double r = count_topologies(design, right, K - kl, memo);
        if (l > kNegInf && r > kNegInf) terms.push_back(l + r);
      }
    }
  }
  const double result = terms.empty() ? kNegInf : logsumexp(terms);
  memo.emplace(key, result);
  return result;
}

}  // namespace

double log_topology_count(const Dataset& design, int K, long long cap) {
  if (K < 1) throw ConfigInvalid("log_topology_count: K must be >= 1");
  if (static_cast<long long>(design.n) * K > cap)
    throw EnumerationCapExceeded("log_topology_count: n*K = " +
                                 std::to_string(static_cast<long long>(design.n) * K) +
                                 " exceeds cap " + std::to_string(cap));
  std::vector<int> all(design.n);
  for (int i = 0; i < design.n; ++i) all[i] = i;
  std::map<std::pair<int, std::vector<int>>, double> memo;
  return count_topologies(design, all, K, memo);
}

TopologyPriorValue log_prior_topology_uniform(const TreePartition& partition,
                                              const Dataset& design,
                                              bool require_normalized, long long cap) {
  const int K = partition.leaf_count();
  if (static_cast<long long>(design.n) * K > cap) {
    if (require_normalized)
      throw EnumerationCapExceeded(
          "log_prior_topology_uniform: normalized value demanded above the "
          "enumeration cap");
    return {0.0, true};
  }
  return {-log_topology_count(design, K, cap), false};
}

GaltonWatsonPrior make_chipman_prior(double alpha, double delta) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigInvalid("chipman prior: alpha must lie in (0,1)");
  if (!(delta > 0.0)) throw ConfigInvalid("chipman prior: delta must be positive");
  GaltonWatsonPrior prior;
  prior.variant = GaltonWatsonPrior::Variant::chipman;
  prior.alpha = alpha;
  prior.delta = delta;
  return prior;
}

GaltonWatsonPrior make_geometric_prior(double alpha) {
  // The n-dependent lower bound alpha > 1/n is enforced where the design is
  // known (config validation); the variant itself only needs alpha in (0,1).
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigInvalid("geometric prior: alpha must lie in (0,1)");
  GaltonWatsonPrior prior;
  prior.variant = GaltonWatsonPrior::Variant::geometric;
  prior.alpha = alpha;
  return prior;
}

double gw_split_probability(int layer, const GaltonWatsonPrior& prior) {
  if (layer < 0) throw ConfigInvalid("gw_split_probability: layer must be >= 0");
  if (prior.variant == GaltonWatsonPrior::Variant::chipman)
    return prior.alpha / std::pow(1.0 + layer, prior.delta);
  return std::pow(prior.alpha, layer);
}

TreePartition sample_gw_tree(const GaltonWatsonPrior& prior, const Dataset& design,
                             Rng& rng, int max_depth) {
  if (max_depth < 1) throw ConfigInvalid("sample_gw_tree: max_depth must be >= 1");
  std::vector<TreeNode> nodes;
  std::vector<std::vector<int>> cells;

  auto build = [&](auto&& self, std::vector<int> members, int layer) -> int {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    std::vector<int> dims = available_dims(design, members);
    const bool can_split = layer < max_depth && !dims.empty();
    if (can_split && rng.uniform() < gw_split_probability(layer, prior)) {
      const int j = dims[static_cast<std::size_t>(rng.uniform_int(dims.size()))];
      const std::vector<double> values = valid_split_values(design, members, j);
      const double c = values[static_cast<std::size_t>(rng.uniform_int(values.size()))];
      std::vector<int> left, right;
      for (int i : members)
        (design.coord(i, j) <= c ? left : right).push_back(i);
      nodes[id].split_dim = j;
      nodes[id].split_value = c;
      const int l = self(self, std::move(left), layer + 1);
      const int r = self(self, std::move(right), layer + 1);
      nodes[id].left = l;
      nodes[id].right = r;
      return id;
    }
    nodes[id].leaf_index = static_cast<int>(cells.size());
    cells.push_back(std::move(members));
    return id;
  };
  std::vector<int> all(design.n);
  for (int i = 0; i < design.n; ++i) all[i] = i;
  build(build, std::move(all), 0);
  return TreePartition::from_memberships(std::move(nodes), std::move(cells), design);
}

namespace {

// Member list of every node, leaves filled from the partition cells and
// internal nodes merged bottom-up.
std::vector<std::vector<int>> node_members(const TreePartition& partition) {
  const auto& nodes = partition.nodes();
  std::vector<std::vector<int>> members(nodes.size());
  auto fill = [&](auto&& self, int id) -> void {
    const TreeNode& node = nodes[id];
    if (node.is_leaf()) {
      members[id] = partition.cell(node.leaf_index);
      return;
    }
    self(self, node.left);
    self(self, node.right);
    members[id].resize(members[node.left].size() + members[node.right].size());
    std::merge(members[node.left].begin(), members[node.left].end(),
               members[node.right].begin(), members[node.right].end(),
               members[id].begin());
  };
  fill(fill, 0);
  return members;
}

}  // namespace

double log_gw_tree_prior(const TreePartition& partition, const Dataset& design,
                         const GaltonWatsonPrior& prior, int max_depth) {
  const auto members = node_members(partition);
  const auto& nodes = partition.nodes();
  double total = 0.0;
  for (std::size_t id = 0; id < nodes.size(); ++id) {
    const TreeNode& node = nodes[id];
    const std::vector<int> dims = available_dims(design, members[id]);
    if (node.is_leaf()) {
      const bool can_split = node.layer < max_depth && !dims.empty();
      if (can_split) {
        const double p = gw_split_probability(node.layer, prior);
        if (p >= 1.0) return kNegInf;  // geometric root splits surely
        total += std::log1p(-p);
      }
      continue;
    }
    if (node.layer >= max_depth) return kNegInf;  // deeper than the truncation
    if (std::find(dims.begin(), dims.end(), node.split_dim) == dims.end())
      return kNegInf;
    const std::vector<double> values =
        valid_split_values(design, members[id], node.split_dim);
    if (std::find(values.begin(), values.end(), node.split_value) == values.end())
      return kNegInf;  // split value not observed inside this cell
    total += std::log(gw_split_probability(node.layer, prior)) -
             std::log(static_cast<double>(dims.size())) -
             std::log(static_cast<double>(values.size()));
  }
  return total;
}

double log_tree_prior(const TreePartition& partition, const Dataset& design,
                      const TreePriorSpec& spec) {
  if (spec.family == TreePriorSpec::Family::poisson_uniform)
    return log_prior_tree_size(partition.leaf_count(), spec.size.lambda) +
           log_prior_topology_uniform(partition, design).log_prior;
  return log_gw_tree_prior(partition, design, spec.gw, spec.max_depth);
}

double LeafPrior::laplace_rate(int K) const {
  if (kind == Kind::laplace_scaled) return c_lambda / std::sqrt(static_cast<double>(K));
  return lambda_leaf;
}

LeafPrior make_gaussian_leaf_prior(double sigma2) {
  if (!(sigma2 > 0.0))
    throw ConfigInvalid("gaussian leaf prior: sigma2 must be positive");
  LeafPrior prior;
  prior.kind = LeafPrior::Kind::gaussian;
  prior.sigma2 = sigma2;
  return prior;
}

LeafPrior make_gaussian_leaf_prior(std::vector<double> Sigma, int K, int n, double c,
                                   double c2) {
  if (K < 1 || Sigma.size() != static_cast<std::size_t>(K) * K)
    throw DimensionMismatch("gaussian leaf prior: Sigma must be K x K");
  if (!(c > 0.0) || !(c2 > 0.0) || n < 1)
    throw ConfigInvalid("gaussian leaf prior: need c > 0, c2 > 0, n >= 1");
  const Eigen::MatrixXd S = as_matrix(Sigma, K);
  if (!S.isApprox(S.transpose(), 1e-12))
    throw ConfigInvalid("gaussian leaf prior: Sigma must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > c))
    throw ConfigInvalid("gaussian leaf prior: lambda_min(Sigma) <= c");
  if (!(hi <= c2 * n))
    throw ConfigInvalid("gaussian leaf prior: lambda_max(Sigma) > c2 * n");
  LeafPrior prior;
  prior.kind = LeafPrior::Kind::gaussian;
  prior.sigma_dense = std::move(Sigma);
  prior.fixed_k = K;
  return prior;
}

LeafPrior make_gaussian_scaled_leaf_prior() {
  LeafPrior prior;
  prior.kind = LeafPrior::Kind::gaussian_scaled;
  return prior;
}

LeafPrior make_laplace_leaf_prior(double lambda) {
  if (!(lambda > 0.0))
    throw ConfigInvalid("laplace leaf prior: lambda must be positive");
  LeafPrior prior;
  prior.kind = LeafPrior::Kind::laplace;
  prior.lambda_leaf = lambda;
  return prior;
}

LeafPrior make_laplace_scaled_leaf_prior(double c_lambda) {
  if (!(c_lambda > 0.0))
    throw ConfigInvalid("laplace scaled leaf prior: c_lambda must be positive");
  LeafPrior prior;
  prior.kind = LeafPrior::Kind::laplace_scaled;
  prior.c_lambda = c_lambda;
  return prior;
}

double log_leaf_prior(const std::vector<double>& beta, const LeafPrior& prior) {
  const int K = static_cast<int>(beta.size());
  if (K < 1) throw DimensionMismatch("log_leaf_prior: beta is empty");
  switch (prior.kind) {
    case LeafPrior::Kind::gaussian: {
      if (!prior.sigma_dense.empty()) {
        if (K != prior.fixed_k)
          throw DimensionMismatch("log_leaf_prior: beta length != prior dimension");
        const Eigen::MatrixXd S = as_matrix(prior.sigma_dense, K);
        const Eigen::Map<const Eigen::VectorXd> b(beta.data(), K);
        Eigen::LLT<Eigen::MatrixXd> llt(S);
        if (llt.info() != Eigen::Success)
          throw NumericalFailure("log_leaf_prior: Sigma not positive-definite");
        const double logdet =
            2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        const double quad = b.dot(llt.solve(b));
        return -0.5 * (K * kLog2Pi + logdet + quad);
      }
      [[fallthrough]];
    }
    case LeafPrior::Kind::gaussian_scaled: {
      const double v = prior.gaussian_variance(K);
      double ss = 0.0;
      for (double b : beta) ss += b * b;
      return -0.5 * (K * (kLog2Pi + std::log(v)) + ss / v);
    }
    case LeafPrior::Kind::laplace:
    case LeafPrior::Kind::laplace_scaled: {
      const double lambda = prior.laplace_rate(K);
      double l1 = 0.0;
      for (double b : beta) l1 += std::abs(b);
      return K * std::log(lambda / 2.0) - lambda * l1;
    }
  }
  throw ConfigInvalid("log_leaf_prior: unknown prior kind");
}

double gaussian_change_of_measure_residual(const std::vector<double>& beta,
                                           const std::vector<double>& a_proj, double t,
                                           const std::vector<double>& Sigma, int n) {
  const int K = static_cast<int>(beta.size());
  if (a_proj.size() != beta.size())
    throw DimensionMismatch("gaussian_change_of_measure_residual: a/beta length");
  if (n < 1) throw ConfigInvalid("gaussian_change_of_measure_residual: n must be >= 1");
  const Eigen::MatrixXd S = as_matrix(Sigma, K);
  const Eigen::Map<const Eigen::VectorXd> b(beta.data(), K);
  const Eigen::Map<const Eigen::VectorXd> a(a_proj.data(), K);
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success)
    throw NumericalFailure("gaussian_change_of_measure_residual: Sigma not PD");
  const double root_n = std::sqrt(static_cast<double>(n));
  const Eigen::VectorXd bt = b - (t / root_n) * a;
  const Eigen::VectorXd Si_a = llt.solve(a);
  const double log_ratio = -0.5 * b.dot(llt.solve(b)) + 0.5 * bt.dot(llt.solve(bt));
  const double bracket =
      (t * t / (2.0 * n)) * a.dot(Si_a) - (t / root_n) * b.dot(Si_a);
  return log_ratio - bracket;
}

std::pair<double, double> laplace_change_of_measure_bound(
    const std::vector<double>& beta, const std::vector<double>& a_proj, double t,
    double lambda_leaf, int n) {
  if (a_proj.size() != beta.size())
    throw DimensionMismatch("laplace_change_of_measure_bound: a/beta length");
  if (!(lambda_leaf > 0.0))
    throw ConfigInvalid("laplace_change_of_measure_bound: lambda must be positive");
  if (n < 1) throw ConfigInvalid("laplace_change_of_measure_bound: n must be >= 1");
  const double shift = t / std::sqrt(static_cast<double>(n));
  double ratio = 0.0;
  double l1 = 0.0;
  for (std::size_t k = 0; k < beta.size(); ++k) {
    ratio += lambda_leaf * (std::abs(beta[k] - shift * a_proj[k]) - std::abs(beta[k]));
    l1 += std::abs(a_proj[k]);
  }
  return {ratio, std::abs(shift) * lambda_leaf * l1};
}

}  // namespace treebvm
