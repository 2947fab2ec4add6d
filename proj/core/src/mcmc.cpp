#include "treebvm/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "treebvm/errors.hpp"
#include "treebvm/stats.hpp"

namespace treebvm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kPosInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

// Sufficient statistics of one cell under the unit-variance Gaussian
// likelihood: point count, residual sum, residual square sum.
struct CellStats {
  double m = 0.0;
  double s = 0.0;
  double q = 0.0;
};

CellStats stats_of(const std::vector<int>& members, const std::vector<double>& r) {
  CellStats st;
  st.m = static_cast<double>(members.size());
  for (int i : members) {
    st.s += r[i];
    st.q += r[i] * r[i];
  }
  return st;
}

std::vector<CellStats> all_cell_stats(const TreePartition& partition,
                                      const std::vector<double>& r) {
  std::vector<CellStats> out(static_cast<std::size_t>(partition.leaf_count()));
  for (int k = 0; k < partition.leaf_count(); ++k)
    out[static_cast<std::size_t>(k)] = stats_of(partition.cell(k), r);
  return out;
}

// log integral of N(r_cell; beta 1, I) against N(beta; 0, v).
double gaussian_cell_marginal(const CellStats& st, double v) {
  return -0.5 * st.m * kLog2Pi - 0.5 * st.q - 0.5 * std::log1p(st.m * v) +
         st.s * st.s * v / (2.0 * (1.0 + st.m * v));
}

// log integral against Laplace(lambda): one completed square per half line,
// each weighted by the normal CDF of its reachable part.
double laplace_cell_marginal(const CellStats& st, double lambda) {
  const double rm = std::sqrt(st.m);
  const double b_plus = (st.s - lambda) * (st.s - lambda) / (2.0 * st.m) +
                        log_normal_cdf((st.s - lambda) / rm);
  const double b_minus = (st.s + lambda) * (st.s + lambda) / (2.0 * st.m) +
                         log_normal_cdf(-(st.s + lambda) / rm);
  return -0.5 * st.m * kLog2Pi - 0.5 * st.q + std::log(0.5 * lambda) +
         0.5 * (kLog2Pi - std::log(st.m)) + logsumexp(b_plus, b_minus);
}

// Whole-tree marginal from per-cell statistics. The scaled priors tie every
// cell's scale to the current leaf count, so totals are always recomputed
// from scratch rather than patched per cell.
double marginal_from_stats(const std::vector<CellStats>& st, const LeafPrior& prior) {
  const int K = static_cast<int>(st.size());
  double total = 0.0;
  if (prior.is_gaussian()) {
    if (!prior.sigma_dense.empty())
      throw ConfigInvalid("marginal_from_stats: dense covariance has no per-cell form");
    const double v = prior.gaussian_variance(K);
    for (const CellStats& c : st) total += gaussian_cell_marginal(c, v);
    return total;
  }
  const double lambda = prior.laplace_rate(K);
  for (const CellStats& c : st) total += laplace_cell_marginal(c, lambda);
  return total;
}

// Posterior precision A = diag(counts) + Sigma^-1 and residual sums for the
// dense-covariance Gaussian leaf prior.
struct DenseLeafPosterior {
  Eigen::MatrixXd A;
  Eigen::VectorXd s;
  double q_total = 0.0;
  double logdet_sigma = 0.0;
};

DenseLeafPosterior dense_leaf_posterior(const TreePartition& partition,
                                        const std::vector<double>& residuals,
                                        const LeafPrior& prior) {
  const int K = partition.leaf_count();
  if (prior.fixed_k != K || static_cast<int>(prior.sigma_dense.size()) != K * K)
    throw DimensionMismatch("dense leaf prior: covariance size does not match the leaf count");
  Eigen::Map<const Eigen::MatrixXd> Sigma(prior.sigma_dense.data(), K, K);
  Eigen::LLT<Eigen::MatrixXd> llt_sigma(Sigma);
  if (llt_sigma.info() != Eigen::Success)
    throw NumericalFailure("dense leaf prior: covariance is not positive definite");
  DenseLeafPosterior out;
  const Eigen::MatrixXd L = llt_sigma.matrixL();
  out.logdet_sigma = 2.0 * L.diagonal().array().log().sum();
  out.A = llt_sigma.solve(Eigen::MatrixXd::Identity(K, K));
  out.s = Eigen::VectorXd::Zero(K);
  for (int k = 0; k < K; ++k) {
    const std::vector<int>& cell = partition.cell(k);
    out.A(k, k) += static_cast<double>(cell.size());
    for (int i : cell) {
      out.s(k) += residuals[i];
      out.q_total += residuals[i] * residuals[i];
    }
  }
  return out;
}

double dense_marginal(const TreePartition& partition, const std::vector<double>& residuals,
                      const LeafPrior& prior) {
  const DenseLeafPosterior post = dense_leaf_posterior(partition, residuals, prior);
  Eigen::LLT<Eigen::MatrixXd> llt_A(post.A);
  if (llt_A.info() != Eigen::Success)
    throw NumericalFailure("dense leaf prior: conditional precision is not positive definite");
  const Eigen::MatrixXd L = llt_A.matrixL();
  const double logdet_A = 2.0 * L.diagonal().array().log().sum();
  const Eigen::VectorXd mu = llt_A.solve(post.s);
  const double n = static_cast<double>(residuals.size());
  return -0.5 * n * kLog2Pi - 0.5 * post.q_total + 0.5 * post.s.dot(mu) -
         0.5 * (logdet_A + post.logdet_sigma);
}

std::vector<double> dense_draw(const TreePartition& partition,
                               const std::vector<double>& residuals, const LeafPrior& prior,
                               Rng& rng) {
  const DenseLeafPosterior post = dense_leaf_posterior(partition, residuals, prior);
  Eigen::LLT<Eigen::MatrixXd> llt_A(post.A);
  if (llt_A.info() != Eigen::Success)
    throw NumericalFailure("dense leaf prior: conditional precision is not positive definite");
  const Eigen::VectorXd mu = llt_A.solve(post.s);
  const int K = partition.leaf_count();
  Eigen::VectorXd z(K);
  for (int k = 0; k < K; ++k) z(k) = rng.normal();
  const Eigen::VectorXd noise = llt_A.matrixU().solve(z);
  std::vector<double> beta(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) beta[static_cast<std::size_t>(k)] = mu(k) + noise(k);
  return beta;
}

// One Laplace leaf conditional: a two-piece truncated Gaussian mixture.
double draw_laplace_leaf(const CellStats& st, double lambda, Rng& rng) {
  const double rm = std::sqrt(st.m);
  const double sd = 1.0 / rm;
  const double mu_plus = (st.s - lambda) / st.m;
  const double mu_minus = (st.s + lambda) / st.m;
  const double b_plus = (st.s - lambda) * (st.s - lambda) / (2.0 * st.m) +
                        log_normal_cdf((st.s - lambda) / rm);
  const double b_minus = (st.s + lambda) * (st.s + lambda) / (2.0 * st.m) +
                         log_normal_cdf(-(st.s + lambda) / rm);
  const double p_plus = 1.0 / (1.0 + std::exp(b_minus - b_plus));
  if (rng.uniform() < p_plus) {
    const double z = sample_normal_lower_truncated(rng, -mu_plus * rm);
    return mu_plus + sd * z;
  }
  const double z = sample_normal_lower_truncated(rng, mu_minus * rm);
  return mu_minus - sd * z;
}

TreePriorSpec effective_prior_spec(const SamplerConfig& config) {
  TreePriorSpec spec = config.tree_prior;
  spec.max_depth = config.max_depth;
  return spec;
}

void split_members(const Dataset& design, const std::vector<int>& members, int dim,
                   double value, std::vector<int>& left, std::vector<int>& right) {
  left.clear();
  right.clear();
  for (int i : members)
    (design.coord(i, dim) <= value ? left : right).push_back(i);
}

int count_prunable(const std::vector<TreeNode>& nodes) {
  int count = 0;
  for (const TreeNode& node : nodes)
    if (!node.is_leaf() && nodes[node.left].is_leaf() && nodes[node.right].is_leaf()) ++count;
  return count;
}

int parent_of(const std::vector<TreeNode>& nodes, int id) {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (!nodes[i].is_leaf() &&
        (nodes[i].left == id || nodes[i].right == id))
      return static_cast<int>(i);
  return -1;
}

// GW factor of one leaf: log(1 - p_layer) when the leaf could have split,
// 0 when the leaf is forced (max depth or no splittable direction).
double gw_leaf_factor(const Dataset& design, const std::vector<int>& members, int layer,
                      const GaltonWatsonPrior& gw, int max_depth) {
  if (layer >= max_depth || available_dims(design, members).empty()) return 0.0;
  const double p = gw_split_probability(layer, gw);
  if (p >= 1.0) return kNegInf;
  return std::log1p(-p);
}

std::vector<int> subtree_members(const TreePartition& partition, int id) {
  std::vector<int> out;
  const auto& nodes = partition.nodes();
  auto gather = [&](auto&& self, int v) -> void {
    const TreeNode& node = nodes[static_cast<std::size_t>(v)];
    if (node.is_leaf()) {
      const std::vector<int>& cell = partition.cell(node.leaf_index);
      out.insert(out.end(), cell.begin(), cell.end());
      return;
    }
    self(self, node.left);
    self(self, node.right);
  };
  gather(gather, id);
  return out;
}

// Re-route the subtree under `root` with its split replaced by
// (dim_override, value_override). Fails when some split value is no longer
// observed inside its cell or no longer divides it. Accumulates the GW prior
// factors of the re-routed subtree when a GW prior is supplied.
struct SubtreeRoute {
  bool ok = true;
  double gw_factors = 0.0;
  std::vector<std::pair<int, std::vector<int>>> leaf_cells;
};

SubtreeRoute route_subtree(const TreePartition& partition, const Dataset& design, int root,
                           int dim_override, double value_override,
                           const GaltonWatsonPrior* gw, int max_depth) {
  SubtreeRoute out;
  const auto& nodes = partition.nodes();
  auto go = [&](auto&& self, int id, std::vector<int> members) -> void {
    if (!out.ok) return;
    const TreeNode& node = nodes[static_cast<std::size_t>(id)];
    if (node.is_leaf()) {
      if (gw) out.gw_factors += gw_leaf_factor(design, members, node.layer, *gw, max_depth);
      out.leaf_cells.emplace_back(node.leaf_index, std::move(members));
      return;
    }
    const int dim = id == root ? dim_override : node.split_dim;
    const double value = id == root ? value_override : node.split_value;
    bool seen_eq = false;
    std::vector<int> left, right;
    for (int i : members) {
      const double c = design.coord(i, dim);
      if (c == value) seen_eq = true;
      (c <= value ? left : right).push_back(i);
    }
    if (!seen_eq || right.empty()) {
      out.ok = false;
      return;
    }
    if (gw) {
      const std::vector<int> dims = available_dims(design, members);
      const std::vector<double> values = valid_split_values(design, members, dim);
      out.gw_factors += std::log(gw_split_probability(node.layer, *gw)) -
                        std::log(static_cast<double>(dims.size())) -
                        std::log(static_cast<double>(values.size()));
    }
    self(self, node.left, std::move(left));
    self(self, node.right, std::move(right));
  };
  go(go, root, subtree_members(partition, root));
  return out;
}

double prior_delta(double new_factors, double old_factors) {
  if (new_factors == kNegInf) return kNegInf;
  if (old_factors == kNegInf) return kPosInf;
  return new_factors - old_factors;
}

bool accept_draw(double rho, Rng& rng) {
  if (std::isnan(rho) || rho == kNegInf) return false;
  if (rho == kPosInf) return true;
  return std::log(rng.uniform()) < rho;
}

}  // namespace

void validate_sampler_config(const SamplerConfig& config, const Dataset& data) {
  const MoveWeights& w = config.move_weights;
  if (!(w.grow >= 0.0) || !(w.prune >= 0.0) || !(w.change >= 0.0))
    throw ConfigInvalid("sampler: move weights must be nonnegative");
  if (std::abs(w.grow + w.prune + w.change - 1.0) > 1e-9)
    throw ConfigInvalid("sampler: move weights must sum to 1");
  if (config.n_trees < 1) throw ConfigInvalid("sampler: n_trees must be >= 1");
  if (config.iterations < 0 || config.burn_in < 0)
    throw ConfigInvalid("sampler: iterations and burn_in must be nonnegative");
  if (config.iterations < config.burn_in)
    throw ConfigInvalid("sampler: iterations must cover burn_in");
  if (config.thin < 1) throw ConfigInvalid("sampler: thin must be >= 1");
  if (config.max_depth < 1) throw ConfigInvalid("sampler: max_depth must be >= 1");

  const TreePriorSpec& spec = config.tree_prior;
  if (spec.family == TreePriorSpec::Family::poisson_uniform) {
    if (!(spec.size.lambda > 0.0))
      throw ConfigInvalid("sampler: size prior lambda must be positive");
  } else if (spec.gw.variant == GaltonWatsonPrior::Variant::chipman) {
    if (!(spec.gw.alpha > 0.0 && spec.gw.alpha < 1.0))
      throw ConfigInvalid("sampler: chipman alpha must lie in (0, 1)");
    if (!(spec.gw.delta >= 0.0))
      throw ConfigInvalid("sampler: chipman delta must be nonnegative");
  } else {
    if (!(spec.gw.alpha <= 1.0))
      throw ConfigInvalid("sampler: geometric alpha must be at most 1");
    if (!(spec.gw.alpha > 1.0 / static_cast<double>(data.n)))
      throw ConfigInvalid("sampler: geometric alpha must exceed 1/n");
  }

  const LeafPrior& leaf = config.leaf_prior;
  if (leaf.kind == LeafPrior::Kind::gaussian) {
    if (!leaf.sigma_dense.empty())
      throw ConfigInvalid(
          "sampler: a dense leaf covariance is fixed to one leaf count and cannot follow "
          "structure moves");
    if (!(leaf.sigma2 > 0.0)) throw ConfigInvalid("sampler: leaf sigma2 must be positive");
  } else if (leaf.kind == LeafPrior::Kind::laplace) {
    if (!(leaf.lambda_leaf > 0.0))
      throw ConfigInvalid("sampler: leaf lambda must be positive");
  } else if (leaf.kind == LeafPrior::Kind::laplace_scaled) {
    if (!(leaf.c_lambda > 0.0)) throw ConfigInvalid("sampler: leaf c_lambda must be positive");
  }
}

TreePartition root_partition(const Dataset& design) {
  TreeNode leaf;
  leaf.leaf_index = 0;
  return TreePartition::assign_cells({leaf}, design);
}

double leaf_marginal_loglik(const TreePartition& partition,
                            const std::vector<double>& residuals, const LeafPrior& prior) {
  if (static_cast<int>(residuals.size()) != partition.n())
    throw LengthMismatch("leaf_marginal_loglik: residual length does not match the design");
  if (prior.is_gaussian() && !prior.sigma_dense.empty())
    return dense_marginal(partition, residuals, prior);
  return marginal_from_stats(all_cell_stats(partition, residuals), prior);
}

std::vector<double> draw_leaf_values(const TreePartition& partition,
                                     const std::vector<double>& residuals,
                                     const LeafPrior& prior, Rng& rng) {
  if (static_cast<int>(residuals.size()) != partition.n())
    throw LengthMismatch("draw_leaf_values: residual length does not match the design");
  if (prior.is_gaussian() && !prior.sigma_dense.empty())
    return dense_draw(partition, residuals, prior, rng);
  const int K = partition.leaf_count();
  const std::vector<CellStats> st = all_cell_stats(partition, residuals);
  std::vector<double> beta(static_cast<std::size_t>(K));
  if (prior.is_gaussian()) {
    const double v = prior.gaussian_variance(K);
    for (int k = 0; k < K; ++k) {
      const CellStats& c = st[static_cast<std::size_t>(k)];
      const double mean = c.s * v / (1.0 + c.m * v);
      const double var = v / (1.0 + c.m * v);
      beta[static_cast<std::size_t>(k)] = mean + std::sqrt(var) * rng.normal();
    }
    return beta;
  }
  const double lambda = prior.laplace_rate(K);
  for (int k = 0; k < K; ++k)
    beta[static_cast<std::size_t>(k)] = draw_laplace_leaf(st[static_cast<std::size_t>(k)], lambda, rng);
  return beta;
}

double grow_log_ratio(const TreePartition& partition, const GrowMove& move,
                      const SamplerConfig& config, const Dataset& design,
                      const std::vector<double>& residuals) {
  const auto& nodes = partition.nodes();
  if (move.leaf_node < 0 || move.leaf_node >= static_cast<int>(nodes.size())) return kNegInf;
  const TreeNode& node = nodes[static_cast<std::size_t>(move.leaf_node)];
  if (!node.is_leaf()) return kNegInf;
  if (node.layer >= config.max_depth) return kNegInf;
  const std::vector<int>& cell = partition.cell(node.leaf_index);
  const std::vector<int> dims = available_dims(design, cell);
  if (std::find(dims.begin(), dims.end(), move.dim) == dims.end()) return kNegInf;
  const std::vector<double> values = valid_split_values(design, cell, move.dim);
  if (std::find(values.begin(), values.end(), move.value) == values.end()) return kNegInf;

  std::vector<int> left, right;
  split_members(design, cell, move.dim, move.value, left, right);

  const std::vector<CellStats> st = all_cell_stats(partition, residuals);
  std::vector<CellStats> st_new = st;
  st_new[static_cast<std::size_t>(node.leaf_index)] = stats_of(left, residuals);
  st_new.push_back(stats_of(right, residuals));
  const double d_marg = marginal_from_stats(st_new, config.leaf_prior) -
                        marginal_from_stats(st, config.leaf_prior);

  double d_prior;
  if (config.tree_prior.family == TreePriorSpec::Family::galton_watson) {
    const GaltonWatsonPrior& gw = config.tree_prior.gw;
    const double p = gw_split_probability(node.layer, gw);
    const double new_factors = std::log(p) - std::log(static_cast<double>(dims.size())) -
                               std::log(static_cast<double>(values.size())) +
                               gw_leaf_factor(design, left, node.layer + 1, gw, config.max_depth) +
                               gw_leaf_factor(design, right, node.layer + 1, gw, config.max_depth);
    const double old_factors = p >= 1.0 ? kNegInf : std::log1p(-p);
    d_prior = prior_delta(new_factors, old_factors);
  } else {
    const TreePriorSpec spec = effective_prior_spec(config);
    const TreePartition grown = apply_grow(partition, move, design);
    d_prior = log_tree_prior(grown, design, spec) - log_tree_prior(partition, design, spec);
  }
  if (d_prior == kNegInf) return kNegInf;

  // reverse prune picks uniformly among the prunable nodes of the grown tree
  int prunable_after = count_prunable(nodes) + 1;
  const int par = parent_of(nodes, move.leaf_node);
  if (par >= 0) {
    const TreeNode& q = nodes[static_cast<std::size_t>(par)];
    const int sibling = q.left == move.leaf_node ? q.right : q.left;
    if (nodes[static_cast<std::size_t>(sibling)].is_leaf()) --prunable_after;
  }
  const int K = partition.leaf_count();
  const double d_prop =
      std::log(config.move_weights.prune) - std::log(static_cast<double>(prunable_after)) -
      (std::log(config.move_weights.grow) - std::log(static_cast<double>(K)) -
       std::log(static_cast<double>(dims.size())) - std::log(static_cast<double>(values.size())));

  return d_marg + d_prior + d_prop;
}

double prune_log_ratio(const TreePartition& partition, const PruneMove& move,
                       const SamplerConfig& config, const Dataset& design,
                       const std::vector<double>& residuals) {
  const auto& nodes = partition.nodes();
  if (move.internal_node < 0 || move.internal_node >= static_cast<int>(nodes.size()))
    return kNegInf;
  const TreeNode& node = nodes[static_cast<std::size_t>(move.internal_node)];
  if (node.is_leaf()) return kNegInf;
  const TreeNode& lchild = nodes[static_cast<std::size_t>(node.left)];
  const TreeNode& rchild = nodes[static_cast<std::size_t>(node.right)];
  if (!lchild.is_leaf() || !rchild.is_leaf()) return kNegInf;

  const std::vector<int>& left = partition.cell(lchild.leaf_index);
  const std::vector<int>& right = partition.cell(rchild.leaf_index);
  std::vector<int> merged = left;
  merged.insert(merged.end(), right.begin(), right.end());

  const std::vector<CellStats> st = all_cell_stats(partition, residuals);
  std::vector<CellStats> st_new;
  st_new.reserve(st.size() - 1);
  for (int k = 0; k < partition.leaf_count(); ++k)
    if (k != lchild.leaf_index && k != rchild.leaf_index)
      st_new.push_back(st[static_cast<std::size_t>(k)]);
  st_new.push_back(stats_of(merged, residuals));
  const double d_marg = marginal_from_stats(st_new, config.leaf_prior) -
                        marginal_from_stats(st, config.leaf_prior);

  const std::vector<int> dims = available_dims(design, merged);
  const std::vector<double> values = valid_split_values(design, merged, node.split_dim);

  double d_prior;
  if (config.tree_prior.family == TreePriorSpec::Family::galton_watson) {
    const GaltonWatsonPrior& gw = config.tree_prior.gw;
    const double p = gw_split_probability(node.layer, gw);
    const double new_factors =
        gw_leaf_factor(design, merged, node.layer, gw, config.max_depth);
    const double old_factors =
        std::log(p) - std::log(static_cast<double>(dims.size())) -
        std::log(static_cast<double>(values.size())) +
        gw_leaf_factor(design, left, node.layer + 1, gw, config.max_depth) +
        gw_leaf_factor(design, right, node.layer + 1, gw, config.max_depth);
    d_prior = prior_delta(new_factors, old_factors);
  } else {
    const TreePriorSpec spec = effective_prior_spec(config);
    const TreePartition pruned = apply_prune(partition, move, design);
    d_prior = log_tree_prior(pruned, design, spec) - log_tree_prior(partition, design, spec);
  }
  if (d_prior == kNegInf) return kNegInf;

  const int K = partition.leaf_count();
  const double d_prop =
      std::log(config.move_weights.grow) - std::log(static_cast<double>(K - 1)) -
      std::log(static_cast<double>(dims.size())) - std::log(static_cast<double>(values.size())) -
      (std::log(config.move_weights.prune) -
       std::log(static_cast<double>(count_prunable(nodes))));

  return d_marg + d_prior + d_prop;
}

double change_log_ratio(const TreePartition& partition, const ChangeMove& move,
                        const SamplerConfig& config, const Dataset& design,
                        const std::vector<double>& residuals) {
  const auto& nodes = partition.nodes();
  if (move.internal_node < 0 || move.internal_node >= static_cast<int>(nodes.size()))
    return kNegInf;
  const TreeNode& node = nodes[static_cast<std::size_t>(move.internal_node)];
  if (node.is_leaf()) return kNegInf;

  const std::vector<int> cell = subtree_members(partition, move.internal_node);
  const std::vector<int> dims = available_dims(design, cell);
  if (std::find(dims.begin(), dims.end(), move.dim) == dims.end()) return kNegInf;
  const std::vector<double> values = valid_split_values(design, cell, move.dim);
  if (std::find(values.begin(), values.end(), move.value) == values.end()) return kNegInf;

  const bool is_gw = config.tree_prior.family == TreePriorSpec::Family::galton_watson;
  const GaltonWatsonPrior* gw = is_gw ? &config.tree_prior.gw : nullptr;
  const SubtreeRoute after = route_subtree(partition, design, move.internal_node, move.dim,
                                           move.value, gw, config.max_depth);
  if (!after.ok) return kNegInf;
  const SubtreeRoute before = route_subtree(partition, design, move.internal_node,
                                            node.split_dim, node.split_value, gw,
                                            config.max_depth);

  const std::vector<CellStats> st = all_cell_stats(partition, residuals);
  std::vector<CellStats> st_new = st;
  for (const auto& [k, members] : after.leaf_cells)
    st_new[static_cast<std::size_t>(k)] = stats_of(members, residuals);
  const double d_marg = marginal_from_stats(st_new, config.leaf_prior) -
                        marginal_from_stats(st, config.leaf_prior);

  const double d_prior = is_gw ? prior_delta(after.gw_factors, before.gw_factors) : 0.0;
  if (d_prior == kNegInf) return kNegInf;

  const std::vector<double> values_old = valid_split_values(design, cell, node.split_dim);
  const double d_prop = std::log(static_cast<double>(values.size())) -
                        std::log(static_cast<double>(values_old.size()));

  return d_marg + d_prior + d_prop;
}

TreePartition apply_grow(const TreePartition& partition, const GrowMove& move,
                         const Dataset& design) {
  const auto& nodes = partition.nodes();
  if (move.leaf_node < 0 || move.leaf_node >= static_cast<int>(nodes.size()) ||
      !nodes[static_cast<std::size_t>(move.leaf_node)].is_leaf())
    throw BadDimension("apply_grow: move does not name a leaf");
  const int k = nodes[static_cast<std::size_t>(move.leaf_node)].leaf_index;
  const std::vector<int>& cell = partition.cell(k);
  const std::vector<int> dims = available_dims(design, cell);
  if (std::find(dims.begin(), dims.end(), move.dim) == dims.end())
    throw BadDimension("apply_grow: dimension not splittable in this cell");
  const std::vector<double> values = valid_split_values(design, cell, move.dim);
  if (std::find(values.begin(), values.end(), move.value) == values.end())
    throw EmptyCell("apply_grow: split value does not divide the cell");

  std::vector<int> left, right;
  split_members(design, cell, move.dim, move.value, left, right);

  std::vector<TreeNode> topology = nodes;
  const int base = static_cast<int>(topology.size());
  TreeNode& grown = topology[static_cast<std::size_t>(move.leaf_node)];
  grown.split_dim = move.dim;
  grown.split_value = move.value;
  grown.left = base;
  grown.right = base + 1;
  grown.leaf_index = -1;
  TreeNode lleaf;
  lleaf.leaf_index = k;
  TreeNode rleaf;
  rleaf.leaf_index = partition.leaf_count();
  topology.push_back(lleaf);
  topology.push_back(rleaf);

  std::vector<std::vector<int>> cells = partition.cells();
  cells[static_cast<std::size_t>(k)] = std::move(left);
  cells.push_back(std::move(right));
  return TreePartition::from_memberships(std::move(topology), std::move(cells), design);
}

TreePartition apply_prune(const TreePartition& partition, const PruneMove& move,
                          const Dataset& design) {
  const auto& nodes = partition.nodes();
  if (move.internal_node < 0 || move.internal_node >= static_cast<int>(nodes.size()) ||
      nodes[static_cast<std::size_t>(move.internal_node)].is_leaf())
    throw BadDimension("apply_prune: move does not name an internal node");
  const TreeNode& node = nodes[static_cast<std::size_t>(move.internal_node)];
  const TreeNode& lchild = nodes[static_cast<std::size_t>(node.left)];
  const TreeNode& rchild = nodes[static_cast<std::size_t>(node.right)];
  if (!lchild.is_leaf() || !rchild.is_leaf())
    throw BadDimension("apply_prune: children are not both leaves");

  const int lo = std::min(lchild.leaf_index, rchild.leaf_index);
  const int hi = std::max(lchild.leaf_index, rchild.leaf_index);
  std::vector<int> merged = partition.cell(lchild.leaf_index);
  const std::vector<int>& rcell = partition.cell(rchild.leaf_index);
  merged.insert(merged.end(), rcell.begin(), rcell.end());

  std::vector<TreeNode> topology = nodes;
  topology[static_cast<std::size_t>(move.internal_node)] = TreeNode{};
  topology[static_cast<std::size_t>(move.internal_node)].leaf_index = lo;
  for (TreeNode& t : topology)
    if (t.is_leaf() && t.leaf_index > hi) --t.leaf_index;

  // drop the now-unreachable children: re-emit the reachable nodes in preorder
  std::vector<TreeNode> compact;
  compact.reserve(topology.size() - 2);
  auto emit = [&](auto&& self, int id) -> int {
    const int my = static_cast<int>(compact.size());
    compact.push_back(topology[static_cast<std::size_t>(id)]);
    if (!topology[static_cast<std::size_t>(id)].is_leaf()) {
      const int l = self(self, topology[static_cast<std::size_t>(id)].left);
      const int r = self(self, topology[static_cast<std::size_t>(id)].right);
      compact[static_cast<std::size_t>(my)].left = l;
      compact[static_cast<std::size_t>(my)].right = r;
    }
    return my;
  };
  emit(emit, 0);

  std::vector<std::vector<int>> cells;
  cells.reserve(static_cast<std::size_t>(partition.leaf_count() - 1));
  for (int k = 0; k < partition.leaf_count(); ++k) {
    if (k == hi) continue;
    if (k == lo)
      cells.push_back(merged);
    else
      cells.push_back(partition.cell(k));
  }
  return TreePartition::from_memberships(std::move(compact), std::move(cells), design);
}

TreePartition apply_change(const TreePartition& partition, const ChangeMove& move,
                           const Dataset& design) {
  const auto& nodes = partition.nodes();
  if (move.internal_node < 0 || move.internal_node >= static_cast<int>(nodes.size()) ||
      nodes[static_cast<std::size_t>(move.internal_node)].is_leaf())
    throw BadDimension("apply_change: move does not name an internal node");

  const std::vector<int> cell = subtree_members(partition, move.internal_node);
  const std::vector<int> dims = available_dims(design, cell);
  if (std::find(dims.begin(), dims.end(), move.dim) == dims.end())
    throw BadDimension("apply_change: dimension not splittable in this cell");
  const std::vector<double> values = valid_split_values(design, cell, move.dim);
  if (std::find(values.begin(), values.end(), move.value) == values.end())
    throw EmptyCell("apply_change: split value does not divide the cell");

  const SubtreeRoute routed = route_subtree(partition, design, move.internal_node, move.dim,
                                            move.value, nullptr, 0);
  if (!routed.ok)
    throw EmptyCell("apply_change: a downstream split no longer divides its cell");

  std::vector<TreeNode> topology = nodes;
  topology[static_cast<std::size_t>(move.internal_node)].split_dim = move.dim;
  topology[static_cast<std::size_t>(move.internal_node)].split_value = move.value;
  std::vector<std::vector<int>> cells = partition.cells();
  for (const auto& [k, members] : routed.leaf_cells) cells[static_cast<std::size_t>(k)] = members;
  return TreePartition::from_memberships(std::move(topology), std::move(cells), design);
}

MhOutcome mh_step(TreeState& state, const SamplerConfig& config, const Dataset& data,
                  Rng& rng) {
  MhOutcome outcome;
  outcome.log_ratio = kNegInf;
  const MoveWeights& w = config.move_weights;
  const double u = rng.uniform();

  if (u < w.grow) {
    outcome.kind = MoveKind::grow;
    const auto& nodes = state.partition.nodes();
    const int K = state.partition.leaf_count();
    const int k = rng.uniform_int(K);
    int leaf_node = -1;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].is_leaf() && nodes[i].leaf_index == k) {
        leaf_node = static_cast<int>(i);
        break;
      }
    const std::vector<int>& cell = state.partition.cell(k);
    const std::vector<int> dims = available_dims(data, cell);
    if (!dims.empty() && nodes[static_cast<std::size_t>(leaf_node)].layer < config.max_depth) {
      const int dim = dims[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(dims.size())))];
      const std::vector<double> values = valid_split_values(data, cell, dim);
      const double value =
          values[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(values.size())))];
      const GrowMove move{leaf_node, dim, value};
      outcome.log_ratio = grow_log_ratio(state.partition, move, config, data, data.y);
      if (accept_draw(outcome.log_ratio, rng)) {
        state.partition = apply_grow(state.partition, move, data);
        outcome.accepted = true;
      }
    }
  } else if (u < w.grow + w.prune) {
    outcome.kind = MoveKind::prune;
    const auto& nodes = state.partition.nodes();
    std::vector<int> prunable;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (!nodes[i].is_leaf() && nodes[nodes[i].left].is_leaf() &&
          nodes[nodes[i].right].is_leaf())
        prunable.push_back(static_cast<int>(i));
    if (!prunable.empty()) {
      const PruneMove move{
          prunable[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(prunable.size())))]};
      outcome.log_ratio = prune_log_ratio(state.partition, move, config, data, data.y);
      if (accept_draw(outcome.log_ratio, rng)) {
        state.partition = apply_prune(state.partition, move, data);
        outcome.accepted = true;
      }
    }
  } else {
    outcome.kind = MoveKind::change;
    const auto& nodes = state.partition.nodes();
    std::vector<int> internal;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (!nodes[i].is_leaf()) internal.push_back(static_cast<int>(i));
    if (!internal.empty()) {
      const int id =
          internal[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(internal.size())))];
      const std::vector<int> cell = subtree_members(state.partition, id);
      const std::vector<int> dims = available_dims(data, cell);
      if (!dims.empty()) {
        const int dim =
            dims[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(dims.size())))];
        const std::vector<double> values = valid_split_values(data, cell, dim);
        const double value =
            values[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(values.size())))];
        const ChangeMove move{id, dim, value};
        outcome.log_ratio = change_log_ratio(state.partition, move, config, data, data.y);
        if (accept_draw(outcome.log_ratio, rng)) {
          state.partition = apply_change(state.partition, move, data);
          outcome.accepted = true;
        }
      }
    }
  }

  state.beta = draw_leaf_values(state.partition, data.y, config.leaf_prior, rng);
  return outcome;
}

ChainDiagnostics run_chain_stream(const SamplerConfig& config, const Dataset& data,
                                  const FunctionalWeight* weight, const DrawSink& sink) {
  validate_sampler_config(config, data);
  if (weight && static_cast<int>(weight->a_values.size()) != data.n)
    throw LengthMismatch("run_chain: weight length does not match the data");

  const int n = data.n;
  const int T = config.n_trees;
  Rng rng(config.seed);
  const TreePriorSpec spec = effective_prior_spec(config);

  std::vector<TreeState> states;
  states.reserve(static_cast<std::size_t>(T));
  const TreePartition root = root_partition(data);
  for (int t = 0; t < T; ++t) states.push_back({root, std::vector<double>(1, 0.0)});

  std::vector<std::vector<double>> fitted(static_cast<std::size_t>(T),
                                          std::vector<double>(static_cast<std::size_t>(n), 0.0));
  std::vector<double> total_fit(static_cast<std::size_t>(n), 0.0);
  Dataset tree_data = data;  // y rewritten with each tree's partial residuals

  long proposals[3] = {0, 0, 0};
  long accepts[3] = {0, 0, 0};
  std::vector<double> psi_series;
  long emitted = 0;
  double leaf_sum = 0.0;
  int leaf_min = std::numeric_limits<int>::max();
  int leaf_max = 0;

  for (long iter = 0; iter < config.iterations; ++iter) {
    for (int t = 0; t < T; ++t) {
      std::vector<double>& fit_t = fitted[static_cast<std::size_t>(t)];
      for (int i = 0; i < n; ++i)
        tree_data.y[static_cast<std::size_t>(i)] =
            data.y[static_cast<std::size_t>(i)] - total_fit[static_cast<std::size_t>(i)] +
            fit_t[static_cast<std::size_t>(i)];
      const MhOutcome out = mh_step(states[static_cast<std::size_t>(t)], config, tree_data, rng);
      ++proposals[static_cast<int>(out.kind)];
      accepts[static_cast<int>(out.kind)] += out.accepted ? 1 : 0;
      const TreeState& st = states[static_cast<std::size_t>(t)];
      for (int i = 0; i < n; ++i) {
        const double v = st.beta[static_cast<std::size_t>(st.partition.cell_of(i))];
        total_fit[static_cast<std::size_t>(i)] += v - fit_t[static_cast<std::size_t>(i)];
        fit_t[static_cast<std::size_t>(i)] = v;
      }
    }

    const auto column_sums = [&] {
      std::vector<double> fresh(static_cast<std::size_t>(n), 0.0);
      for (int t = 0; t < T; ++t)
        for (int i = 0; i < n; ++i)
          fresh[static_cast<std::size_t>(i)] +=
              fitted[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
      return fresh;
    };

    // the incremental ensemble total drifts only within a 64-sweep window;
    // check it against a fresh sum, then adopt the fresh sum
    if ((iter + 1) % 64 == 0 || iter + 1 == config.iterations) {
      std::vector<double> fresh = column_sums();
      for (int i = 0; i < n; ++i)
        if (std::abs(fresh[static_cast<std::size_t>(i)] - total_fit[static_cast<std::size_t>(i)]) >
            1e-10)
          throw NumericalFailure("run_chain: backfitting totals drifted");
      total_fit = std::move(fresh);
    }

    if (iter >= config.burn_in && (iter - config.burn_in) % config.thin == 0) {
      // emit the exact column sum so the snapshot equals the forest's own
      // evaluation bit for bit
      total_fit = column_sums();
      PosteriorDraw draw;
      draw.iteration = iter;
      draw.fitted_values = total_fit;
      draw.forest.ensemble.trees.reserve(static_cast<std::size_t>(T));
      draw.forest.betas.reserve(static_cast<std::size_t>(T));
      double log_post = 0.0;
      int leaves = 0;
      for (int t = 0; t < T; ++t) {
        const TreeState& st = states[static_cast<std::size_t>(t)];
        draw.forest.ensemble.trees.push_back(st.partition);
        draw.forest.betas.push_back(st.beta);
        log_post += log_tree_prior(st.partition, data, spec);
        log_post += log_leaf_prior(st.beta, config.leaf_prior);
        leaves += st.partition.leaf_count();
      }
      for (int i = 0; i < n; ++i) {
        const double res =
            data.y[static_cast<std::size_t>(i)] - total_fit[static_cast<std::size_t>(i)];
        log_post -= 0.5 * res * res;
      }
      log_post -= 0.5 * n * kLog2Pi;
      draw.log_posterior_unnorm = log_post;
      draw.psi_value = weight ? psi(draw.fitted_values, *weight) : 0.0;
      if (weight) psi_series.push_back(draw.psi_value);
      leaf_sum += leaves;
      leaf_min = std::min(leaf_min, leaves);
      leaf_max = std::max(leaf_max, leaves);
      ++emitted;
      sink(draw);
    }
  }

  ChainDiagnostics diag;
  diag.draws_emitted = emitted;
  auto rate = [](long acc, long prop) {
    return prop > 0 ? static_cast<double>(acc) / static_cast<double>(prop) : 0.0;
  };
  diag.acceptance_rates.grow = rate(accepts[0], proposals[0]);
  diag.acceptance_rates.prune = rate(accepts[1], proposals[1]);
  diag.acceptance_rates.change = rate(accepts[2], proposals[2]);
  // ESS needs a handful of draws to estimate autocorrelation at all
  diag.ess_psi = (weight && psi_series.size() >= 4) ? effective_sample_size(psi_series) : 0.0;
  if (emitted > 0) {
    diag.leaf_counts.mean = leaf_sum / static_cast<double>(emitted);
    diag.leaf_counts.min = leaf_min;
    diag.leaf_counts.max = leaf_max;
  }
  return diag;
}

std::pair<std::vector<PosteriorDraw>, ChainDiagnostics> run_chain(
    const SamplerConfig& config, const Dataset& data, const FunctionalWeight* weight) {
  std::vector<PosteriorDraw> draws;
  ChainDiagnostics diag =
      run_chain_stream(config, data, weight, [&](const PosteriorDraw& d) { draws.push_back(d); });
  return {std::move(draws), diag};
}

EnumeratedPosterior enumerate_structure_posterior(const Dataset& data,
                                                  const SamplerConfig& config,
                                                  int max_structures) {
  validate_sampler_config(config, data);

  struct Cand {
    std::vector<TreeNode> nodes;
    std::vector<std::vector<int>> cells;
  };

  auto expand = [&](auto&& self, const std::vector<int>& members, int layer) -> std::vector<Cand> {
    std::vector<Cand> out;
    out.push_back({{TreeNode{}}, {members}});
    if (layer >= config.max_depth) return out;
    for (int j : available_dims(data, members)) {
      for (double c : valid_split_values(data, members, j)) {
        std::vector<int> left, right;
        split_members(data, members, j, c, left, right);
        const std::vector<Cand> ls = self(self, left, layer + 1);
        const std::vector<Cand> rs = self(self, right, layer + 1);
        for (const Cand& lc : ls) {
          for (const Cand& rc : rs) {
            if (static_cast<int>(out.size()) >= max_structures)
              throw EnumerationCapExceeded(
                  "enumerate_structure_posterior: structure count exceeds the cap");
            Cand cand;
            TreeNode rootn;
            rootn.split_dim = j;
            rootn.split_value = c;
            rootn.left = 1;
            rootn.right = 1 + static_cast<int>(lc.nodes.size());
            cand.nodes.push_back(rootn);
            for (TreeNode t : lc.nodes) {
              if (!t.is_leaf()) {
                t.left += 1;
                t.right += 1;
              }
              cand.nodes.push_back(t);
            }
            const int shift = 1 + static_cast<int>(lc.nodes.size());
            for (TreeNode t : rc.nodes) {
              if (!t.is_leaf()) {
                t.left += shift;
                t.right += shift;
              }
              cand.nodes.push_back(t);
            }
            cand.cells = lc.cells;
            cand.cells.insert(cand.cells.end(), rc.cells.begin(), rc.cells.end());
            out.push_back(std::move(cand));
          }
        }
      }
    }
    return out;
  };

  std::vector<int> all(static_cast<std::size_t>(data.n));
  for (int i = 0; i < data.n; ++i) all[static_cast<std::size_t>(i)] = i;
  std::vector<Cand> cands = expand(expand, all, 0);

  EnumeratedPosterior post;
  const TreePriorSpec spec = effective_prior_spec(config);
  for (Cand& cand : cands) {
    // composition emits nodes in preorder, so leaves appear left to right in
    // the same order as the concatenated cells
    int next = 0;
    for (TreeNode& t : cand.nodes)
      if (t.is_leaf()) t.leaf_index = next++;
    TreePartition part =
        TreePartition::from_memberships(std::move(cand.nodes), std::move(cand.cells), data);
    post.log_weight.push_back(log_tree_prior(part, data, spec) +
                              leaf_marginal_loglik(part, data.y, config.leaf_prior));
    post.structures.push_back(std::move(part));
  }

  const double lse = logsumexp(post.log_weight);
  post.probability.reserve(post.log_weight.size());
  for (double w : post.log_weight)
    post.probability.push_back(std::isfinite(lse) && std::isfinite(w) ? std::exp(w - lse) : 0.0);
  return post;
}

double ensemble_shift_check(const PosteriorDraw& draw, double s,
                            const FunctionalWeight& weight, const LeafPrior& leaf_prior) {
  for (double a : weight.a_values)
    if (a != 1.0)
      throw WrongWeight("ensemble_shift_check: requires the constant weight a = 1");
  const int T = draw.forest.ensemble.tree_count();
  if (T == 0 || draw.fitted_values.empty() ||
      static_cast<int>(draw.forest.betas.size()) != T)
    throw ConfigInvalid("ensemble_shift_check: draw has no trees");
  const double n = static_cast<double>(draw.fitted_values.size());
  const double c = s / (static_cast<double>(T) * std::sqrt(n));

  if (leaf_prior.kind == LeafPrior::Kind::gaussian_scaled) {
    double actual = 0.0;
    double closed = 0.0;
    for (int t = 0; t < T; ++t) {
      const std::vector<double>& beta = draw.forest.betas[static_cast<std::size_t>(t)];
      std::vector<double> shifted = beta;
      for (double& b : shifted) b -= c;
      actual += log_leaf_prior(beta, leaf_prior) - log_leaf_prior(shifted, leaf_prior);
      double mean = 0.0;
      for (double b : beta) mean += b;
      mean /= static_cast<double>(beta.size());
      closed += 0.5 * c * c - c * mean;
    }
    return actual - closed;
  }
  if (leaf_prior.kind == LeafPrior::Kind::laplace_scaled) {
    double actual = 0.0;
    double bound = 0.0;
    for (int t = 0; t < T; ++t) {
      const std::vector<double>& beta = draw.forest.betas[static_cast<std::size_t>(t)];
      std::vector<double> shifted = beta;
      for (double& b : shifted) b -= c;
      actual += log_leaf_prior(beta, leaf_prior) - log_leaf_prior(shifted, leaf_prior);
      const int K = static_cast<int>(beta.size());
      bound += std::abs(c) * leaf_prior.laplace_rate(K) * static_cast<double>(K);
    }
    return bound - std::abs(actual);
  }
  throw ConfigInvalid("ensemble_shift_check: needs a scaled leaf prior");
}

}  // namespace treebvm
