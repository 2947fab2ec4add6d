#include "treebvm/partition.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

#include "treebvm/errors.hpp"

namespace treebvm {

namespace {

// Root is node 0 by convention. Recomputes the (layer, position) depth tags.
void set_depth_tags(std::vector<TreeNode>& nodes, int id, int layer, int position) {
  nodes[id].layer = layer;
  nodes[id].position = position;
  if (!nodes[id].is_leaf()) {
    set_depth_tags(nodes, nodes[id].left, layer + 1, 2 * position);
    set_depth_tags(nodes, nodes[id].right, layer + 1, 2 * position + 1);
  }
}

void collect_leaves(const std::vector<TreeNode>& nodes, int id, std::vector<int>& out) {
  if (nodes[id].is_leaf()) {
    out.push_back(id);
    return;
  }
  collect_leaves(nodes, nodes[id].left, out);
  collect_leaves(nodes, nodes[id].right, out);
}

}  // namespace

TreePartition TreePartition::assign_cells(std::vector<TreeNode> topology,
                                          const Dataset& design) {
  if (topology.empty()) throw EmptyCell("assign_cells: empty topology");
  set_depth_tags(topology, 0, 0, 0);

  std::vector<int> leaves;
  collect_leaves(topology, 0, leaves);
  const int K = static_cast<int>(leaves.size());

  // Keep caller-provided leaf indices when they form a permutation of
  // {0..K-1} (serialization round trips); otherwise assign left-to-right.
  bool keep = true;
  std::vector<bool> seen(K, false);
  for (int id : leaves) {
    const int k = topology[id].leaf_index;
    if (k < 0 || k >= K || seen[k]) {
      keep = false;
      break;
    }
    seen[k] = true;
  }
  if (!keep)
    for (int i = 0; i < K; ++i) topology[leaves[i]].leaf_index = i;

  TreePartition part;
  part.nodes_ = std::move(topology);
  part.n_ = design.n;
  part.p_ = design.p;
  part.cells_.assign(K, {});

  // Route points top-down; "<=" goes left. Member lists stay sorted because
  // the partition below is stable.
  struct Frame {
    int id;
    std::vector<int> members;
  };
  std::vector<Frame> stack;
  std::vector<int> all(design.n);
  for (int i = 0; i < design.n; ++i) all[i] = i;
  stack.push_back({0, std::move(all)});
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    const TreeNode& node = part.nodes_[f.id];
    if (node.is_leaf()) {
      if (f.members.empty())
        throw EmptyCell("assign_cells: empty cell at layer " +
                        std::to_string(node.layer) + ", position " +
                        std::to_string(node.position));
      part.cells_[node.leaf_index] = std::move(f.members);
      continue;
    }
    std::vector<int> left, right;
    for (int i : f.members) {
      if (design.coord(i, node.split_dim) <= node.split_value)
        left.push_back(i);
      else
        right.push_back(i);
    }
    stack.push_back({node.left, std::move(left)});
    stack.push_back({node.right, std::move(right)});
  }

  part.cell_of_.assign(design.n, -1);
  for (int k = 0; k < K; ++k)
    for (int i : part.cells_[k]) part.cell_of_[i] = k;
  part.validate(design);
  return part;
}

TreePartition TreePartition::from_memberships(std::vector<TreeNode> topology,
                                              std::vector<std::vector<int>> cells,
                                              const Dataset& design) {
  set_depth_tags(topology, 0, 0, 0);
  TreePartition part;
  part.nodes_ = std::move(topology);
  part.cells_ = std::move(cells);
  part.n_ = design.n;
  part.p_ = design.p;
  for (auto& cell : part.cells_) std::sort(cell.begin(), cell.end());
  part.cell_of_.assign(design.n, -1);
  for (std::size_t k = 0; k < part.cells_.size(); ++k)
    for (int i : part.cells_[k]) part.cell_of_[i] = static_cast<int>(k);
  part.validate(design);
  return part;
}

int TreePartition::depth() const {
  int d = 0;
  for (const TreeNode& node : nodes_)
    if (node.is_leaf()) d = std::max(d, node.layer);
  return d;
}

void TreePartition::validate(const Dataset& design) const {
  if (n_ != design.n || p_ != design.p)
    throw DimensionMismatch("TreePartition::validate: design shape mismatch");
  const int K = leaf_count();
  int internal = 0;
  std::vector<bool> leaf_seen(K, false);
  for (const TreeNode& node : nodes_) {
    if (node.is_leaf()) {
      if (node.leaf_index < 0 || node.leaf_index >= K || leaf_seen[node.leaf_index])
        throw EmptyCell("TreePartition::validate: bad leaf indexing");
      leaf_seen[node.leaf_index] = true;
    } else {
      ++internal;
      if (node.split_dim < 0 || node.split_dim >= p_)
        throw BadDimension("TreePartition::validate: split dimension out of range");
      bool observed = false;
      for (int i = 0; i < design.n && !observed; ++i)
        observed = design.coord(i, node.split_dim) == node.split_value;
      if (!observed)
        throw EmptyCell("TreePartition::validate: split value not observed in design");
    }
  }
  if (internal + 1 != K)
    throw EmptyCell("TreePartition::validate: leaf count != internal count + 1");
  std::vector<int> hit(n_, 0);
  for (int k = 0; k < K; ++k) {
    if (cells_[k].empty()) throw EmptyCell("TreePartition::validate: empty cell");
    for (int i : cells_[k]) {
      if (i < 0 || i >= n_ || cell_of_[i] != k)
        throw EmptyCell("TreePartition::validate: inconsistent membership");
      ++hit[i];
    }
  }
  for (int i = 0; i < n_; ++i)
    if (hit[i] != 1)
      throw EmptyCell("TreePartition::validate: cells are not a partition");
}

DiameterSummary diameter(const Dataset& design,
                         const std::vector<std::vector<int>>& cells) {
  DiameterSummary out;
  out.per_cell.reserve(cells.size());
  out.mu.reserve(cells.size());
  double total_sq = 0.0;
  for (const auto& cell : cells) {
    double d = 0.0;
    if (design.p == 1) {
      double lo = design.coord(cell.front(), 0), hi = lo;
      for (int i : cell) {
        lo = std::min(lo, design.coord(i, 0));
        hi = std::max(hi, design.coord(i, 0));
      }
      d = hi - lo;
    } else {
      for (std::size_t a = 0; a < cell.size(); ++a)
        for (std::size_t b = a + 1; b < cell.size(); ++b) {
          double sq = 0.0;
          for (int j = 0; j < design.p; ++j) {
            const double diff = design.coord(cell[a], j) - design.coord(cell[b], j);
            sq += diff * diff;
          }
          d = std::max(d, sq);
        }
      d = std::sqrt(d);
    }
    const double mu = static_cast<double>(cell.size()) / design.n;
    out.per_cell.push_back(d);
    out.mu.push_back(mu);
    total_sq += mu * d * d;
  }
  out.total = std::sqrt(total_sq);
  return out;
}

DiameterSummary diameter(const Dataset& design, const TreePartition& partition) {
  return diameter(design, partition.cells());
}

TreePartition build_kd_tree(const Dataset& design, int s) {
  if (s < 0) throw ConfigInvalid("build_kd_tree: s must be >= 0");
  const int total_depth = s * design.p;
  if (total_depth > 30 || (1LL << total_depth) > design.n)
    throw TooShallowData("build_kd_tree: n < 2^(s*p)");

  std::vector<TreeNode> nodes;
  std::vector<std::vector<int>> cells;

  // Preorder recursion; node 0 is the root.
  auto build = [&](auto&& self, std::vector<int> members, int level) -> int {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    if (level == total_depth) {
      nodes[id].leaf_index = static_cast<int>(cells.size());
      cells.push_back(std::move(members));
      return id;
    }
    const int axis = level % design.p;
    std::sort(members.begin(), members.end(), [&](int a, int b) {
      const double va = design.coord(a, axis), vb = design.coord(b, axis);
      return va < vb || (va == vb && a < b);
    });
    const std::size_t left_count = members.size() / 2;
    nodes[id].split_dim = axis;
    nodes[id].split_value = design.coord(members[left_count - 1], axis);
    std::vector<int> left(members.begin(), members.begin() + left_count);
    std::vector<int> right(members.begin() + left_count, members.end());
    const int l = self(self, std::move(left), level + 1);
    const int r = self(self, std::move(right), level + 1);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  };
  std::vector<int> all(design.n);
  for (int i = 0; i < design.n; ++i) all[i] = i;
  build(build, std::move(all), 0);
  return TreePartition::from_memberships(std::move(nodes), std::move(cells), design);
}

TreePartition equivalent_blocks(const Dataset& design, int K) {
  if (design.p != 1)
    throw BadDimension("equivalent_blocks: defined for p = 1 only");
  if (K < 1) throw ConfigInvalid("equivalent_blocks: K must be >= 1");
  if (K > design.n) throw EmptyCell("equivalent_blocks: K exceeds n");

  std::vector<int> order(design.n);
  for (int i = 0; i < design.n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double va = design.coord(a, 0), vb = design.coord(b, 0);
    return va < vb || (va == vb && a < b);
  });

  const int base = design.n / K;
  const int extra = design.n % K;
  std::vector<std::vector<int>> cells(K);
  std::size_t pos = 0;
  for (int k = 0; k < K; ++k) {
    const int size = base + (k < extra ? 1 : 0);
    cells[k].assign(order.begin() + pos, order.begin() + pos + size);
    pos += size;
  }

  // Left-leaning chain: each internal node splits off one block.
  std::vector<TreeNode> nodes;
  for (int k = 0; k < K - 1; ++k) {
    TreeNode internal;
    internal.split_dim = 0;
    internal.split_value = design.coord(cells[k].back(), 0);
    internal.left = static_cast<int>(nodes.size()) + 1;
    internal.right = static_cast<int>(nodes.size()) + 2;
    nodes.push_back(internal);
    TreeNode leaf;
    leaf.leaf_index = k;
    nodes.push_back(leaf);
  }
  TreeNode last;
  last.leaf_index = K - 1;
  nodes.push_back(last);

  return TreePartition::from_memberships(std::move(nodes), std::move(cells), design);
}

CellPartition merged_partition(const Ensemble& ensemble, int n) {
  CellPartition merged;
  merged.cell_of.assign(n, 0);
  // Iteratively refine by each tree; new ids by first occurrence, so cells
  // stay ordered by smallest member index.
  int groups = 1;
  for (const TreePartition& tree : ensemble.trees) {
    std::unordered_map<std::uint64_t, int> remap;
    remap.reserve(static_cast<std::size_t>(groups) * 2);
    int next = 0;
    for (int i = 0; i < n; ++i) {
      const std::uint64_t key =
          (static_cast<std::uint64_t>(merged.cell_of[i]) << 32) |
          static_cast<std::uint32_t>(tree.cell_of(i));
      auto [it, inserted] = remap.try_emplace(key, next);
      if (inserted) ++next;
      merged.cell_of[i] = it->second;
    }
    groups = next;
  }
  merged.cells.assign(groups, {});
  for (int i = 0; i < n; ++i) merged.cells[merged.cell_of[i]].push_back(i);
  return merged;
}

double regularity_threshold(double alpha, int n, int p, double M, double M_n) {
  return std::pow(M_n / M, 1.0 / alpha) *
         std::pow(static_cast<double>(n), -1.0 / (2.0 * alpha + p)) *
         std::pow(std::log(static_cast<double>(n)), 1.0 / (2.0 * alpha));
}

bool is_n_regular(double total_diameter, double alpha, int n, int p, double M,
                  double M_n) {
  return total_diameter <= regularity_threshold(alpha, n, p, M, M_n);
}

bool is_n_regular(const Dataset& design, const TreePartition& partition, double alpha,
                  double M, double M_n) {
  return is_n_regular(diameter(design, partition).total, alpha, design.n, design.p, M,
                      M_n);
}

std::vector<double> valid_split_values(const Dataset& design,
                                       const std::vector<int>& members, int dim) {
  std::vector<double> values;
  values.reserve(members.size());
  for (int i : members) values.push_back(design.coord(i, dim));
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  if (!values.empty()) values.pop_back();  // splitting at the max orphans the right child
  return values;
}

std::vector<int> available_dims(const Dataset& design, const std::vector<int>& members) {
  std::vector<int> dims;
  for (int j = 0; j < design.p; ++j) {
    double lo = design.coord(members.front(), j), hi = lo;
    for (int i : members) {
      lo = std::min(lo, design.coord(i, j));
      hi = std::max(hi, design.coord(i, j));
    }
    if (lo < hi) dims.push_back(j);
  }
  return dims;
}

namespace {

nlohmann::json node_to_json(const std::vector<TreeNode>& nodes, int id) {
  const TreeNode& node = nodes[id];
  if (node.is_leaf()) return nlohmann::json{{"leaf", node.leaf_index + 1}};
  return nlohmann::json{{"split", {{"j", node.split_dim + 1}, {"c", node.split_value}}},
                        {"left", node_to_json(nodes, node.left)},
                        {"right", node_to_json(nodes, node.right)}};
}

int node_from_json(const nlohmann::json& j, std::vector<TreeNode>& nodes) {
  const int id = static_cast<int>(nodes.size());
  nodes.emplace_back();
  if (j.contains("leaf")) {
    nodes[id].leaf_index = j.at("leaf").get<int>() - 1;
    return id;
  }
  if (!j.contains("split") || !j.contains("left") || !j.contains("right"))
    throw IoError("topology_from_json: node needs either 'leaf' or 'split'+children");
  nodes[id].split_dim = j.at("split").at("j").get<int>() - 1;
  nodes[id].split_value = j.at("split").at("c").get<double>();
  const int l = node_from_json(j.at("left"), nodes);
  const int r = node_from_json(j.at("right"), nodes);
  nodes[id].left = l;
  nodes[id].right = r;
  return id;
}

}  // namespace

std::string topology_to_json(const TreePartition& partition) {
  return node_to_json(partition.nodes(), 0).dump();
}

std::vector<TreeNode> topology_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw IoError("topology_from_json: malformed JSON");
  std::vector<TreeNode> nodes;
  try {
    node_from_json(j, nodes);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("topology_from_json: ") + e.what());
  }
  return nodes;
}

}  // namespace treebvm
