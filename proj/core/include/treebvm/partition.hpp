#pragma once

#include <string>
#include <vector>

#include "treebvm/dataset.hpp"

namespace treebvm {

// Node of a tree-shaped partition. Internal nodes carry an axis-aligned split
// (split_dim is 0-based; "<= split_value" routes left), leaves carry the cell
// index. layer/position are the (l, k) depth tags: the root is (0, 0) and the
// children of (l, k) are (l+1, 2k) and (l+1, 2k+1).
struct TreeNode {
  int split_dim = -1;
  double split_value = 0.0;
  int left = -1;
  int right = -1;
  int leaf_index = -1;
  int layer = 0;
  int position = 0;

  bool is_leaf() const { return split_dim < 0; }
};

// Immutable tree partition of the design points. Cells are index lists; all
// geometry is evaluated at design points only.
class TreePartition {
 public:
  TreePartition() = default;

  // Routes every design point through the topology ("<= goes left") and
  // fills cell memberships. Throws EmptyCell if some leaf receives no point.
  static TreePartition assign_cells(std::vector<TreeNode> topology, const Dataset& design);

  // Builders that fix memberships positionally (k-d median splits may divide
  // tied coordinate values between children; routing cannot express that).
  static TreePartition from_memberships(std::vector<TreeNode> topology,
                                        std::vector<std::vector<int>> cells,
                                        const Dataset& design);

  int leaf_count() const { return static_cast<int>(cells_.size()); }
  int n() const { return n_; }
  int p() const { return p_; }
  int depth() const;

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const std::vector<int>& cell(int k) const { return cells_[k]; }
  const std::vector<std::vector<int>>& cells() const { return cells_; }
  int cell_of(int point) const { return cell_of_[point]; }
  const std::vector<int>& cell_assignments() const { return cell_of_; }

  // Disjointness, coverage, nonemptiness, leaf count = internal count + 1,
  // split values observed in the design. Throws on violation.
  void validate(const Dataset& design) const;

 private:
  std::vector<TreeNode> nodes_;
  std::vector<std::vector<int>> cells_;
  std::vector<int> cell_of_;
  int n_ = 0;
  int p_ = 0;
};

// A flat cell decomposition without tree structure (merged ensembles).
struct CellPartition {
  std::vector<std::vector<int>> cells;
  std::vector<int> cell_of;
};

struct Ensemble {
  std::vector<TreePartition> trees;

  int tree_count() const { return static_cast<int>(trees.size()); }
};

struct DiameterSummary {
  std::vector<double> per_cell;
  std::vector<double> mu;
  double total = 0.0;  // sqrt(sum_k mu_k diam_k^2)
};

DiameterSummary diameter(const Dataset& design, const std::vector<std::vector<int>>& cells);
DiameterSummary diameter(const Dataset& design, const TreePartition& partition);

// k-d tree with K = 2^(s*p) leaves; level l splits every node on axis
// (l mod p) at the member median (lower-median count goes left, ties split
// positionally toward the lower order statistic). Throws TooShallowData
// when n < 2^(s*p).
TreePartition build_kd_tree(const Dataset& design, int s);

// p=1 only: K interval cells of consecutive order statistics, the first
// (n mod K) cells taking the extra point, realized as a left-leaning tree.
TreePartition equivalent_blocks(const Dataset& design, int K);

// Superimposes all tree partitions of an ensemble and drops empty
// intersections. Cells are ordered by their smallest member index.
CellPartition merged_partition(const Ensemble& ensemble, int n);

// Threshold d_n(alpha) = (M_n/M)^(1/alpha) n^(-1/(2 alpha + p)) (ln n)^(1/(2 alpha)).
double regularity_threshold(double alpha, int n, int p, double M, double M_n);

bool is_n_regular(const Dataset& design, const TreePartition& partition, double alpha,
                  double M, double M_n);
bool is_n_regular(double total_diameter, double alpha, int n, int p, double M, double M_n);

// Split-rule support at a node: values c of coordinate dim among `members`
// with at least one member on each side of "<= c" (all distinct member
// values except the largest).
std::vector<double> valid_split_values(const Dataset& design, const std::vector<int>& members,
                                       int dim);
// Dimensions with at least one valid split value.
std::vector<int> available_dims(const Dataset& design, const std::vector<int>& members);

// Canonical JSON: {"split":{"j":...,"c":...},"left":...,"right":...} or
// {"leaf":k}; j is 1-based in the serialized form.
std::string topology_to_json(const TreePartition& partition);
std::vector<TreeNode> topology_from_json(const std::string& text);

}  // namespace treebvm
