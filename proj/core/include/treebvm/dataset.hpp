#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace treebvm {

// Fixed design plus responses. x is row-major n x p with coordinates in [0,1].
struct Dataset {
  std::vector<double> x;
  std::vector<double> y;
  int n = 0;
  int p = 0;

  double coord(int i, int j) const { return x[static_cast<std::size_t>(i) * p + j]; }
};

// Everything known only in simulation mode: the truth at the design points,
// the realized noise, and the identity of the generating family.
struct SimulationTruth {
  std::vector<double> f0_values;
  std::vector<double> eps;
  std::string f0_id;
  double alpha = 1.0;
  std::uint64_t seed = 0;
};

// Weight a(.) of the linear functional, tabulated at the design points.
struct FunctionalWeight {
  std::vector<double> a_values;
  double gamma = 1.0;
  double sup_bound = 0.0;  // strict bound: max |a| < sup_bound
  std::string family;
};

// Per-depth row of a design-regularity check.
struct RegularityRow {
  int s = 0;
  double max_diam = 0.0;
  double typical_diam = 0.0;  // occupancy-weighted mean cell diameter
  bool pass = true;
};

struct RegularityVerdict {
  bool regular = true;
  int first_failing_s = 0;  // 0 when none fail
  std::vector<RegularityRow> rows;
};

// p=1: x_i = i/n. p>1: tensor grid of i/m per axis, m = n^(1/p); throws
// NonSquareGrid when no integer m exists. Points ordered lexicographically
// with the last axis fastest.
Dataset make_grid_design(int n, int p);

// Truth catalog: f0_const, f0_lipschitz, f0_holder, f0_flat_half.
// const_value is only read by f0_const.
std::vector<double> evaluate_truth(const Dataset& design, const std::string& family,
                                   double alpha, double const_value = 0.0);

// Draws eps iid N(0,1) from the stream keyed by seed and sets y = f0 + eps.
std::pair<Dataset, SimulationTruth> generate_responses(const Dataset& design,
                                                       const std::string& truth_family,
                                                       double alpha, std::uint64_t seed,
                                                       double const_value = 0.0);

// Weight catalog: "one" (a == 1), "x1" (a = x_1), "kink" (a = |x_1 - 1/2|^gamma).
FunctionalWeight make_weight(const Dataset& design, const std::string& family,
                             double gamma);

// For s = 1..max_depth_s (capped where the k-d tree no longer fits), checks
// max_k diam(cell) < M * sum_k mu_k diam(cell_k). All-zero diameters pass.
RegularityVerdict check_design_regularity(const Dataset& design, int max_depth_s,
                                          double M);

// One JSON document per dataset: {n, p, x, y, f0, eps, seed, family, alpha}.
void save_dataset_json(const Dataset& data, const SimulationTruth& truth,
                       const std::string& path);
std::pair<Dataset, SimulationTruth> load_dataset_json(const std::string& path);
std::string dataset_to_json(const Dataset& data, const SimulationTruth& truth);
std::pair<Dataset, SimulationTruth> dataset_from_json(const std::string& text);

// CSV with header x_1..x_p, y, f0, eps.
void save_dataset_csv(const Dataset& data, const SimulationTruth& truth,
                      const std::string& path);

}  // namespace treebvm
