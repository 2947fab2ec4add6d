#include "treebvm/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "treebvm/errors.hpp"
#include "treebvm/partition.hpp"
#include "treebvm/rng.hpp"

namespace treebvm {

namespace {
constexpr double kTwoPi = 6.2831853071795864769252867665590058;

int integer_root(int n, int p) {
  const double guess = std::pow(static_cast<double>(n), 1.0 / p);
  for (int m = std::max(1, static_cast<int>(guess) - 1);
       m <= static_cast<int>(guess) + 1; ++m) {
    std::int64_t pw = 1;
    for (int k = 0; k < p; ++k) pw *= m;
    if (pw == n) return m;
  }
  return -1;
}
}  // namespace

Dataset make_grid_design(int n, int p) {
  if (n < 2) throw ConfigInvalid("make_grid_design: n must be >= 2");
  if (p < 1) throw ConfigInvalid("make_grid_design: p must be >= 1");
  Dataset d;
  d.n = n;
  d.p = p;
  d.x.resize(static_cast<std::size_t>(n) * p);
  d.y.assign(n, 0.0);
  if (p == 1) {
    for (int i = 0; i < n; ++i) d.x[i] = static_cast<double>(i + 1) / n;
    return d;
  }
  const int m = integer_root(n, p);
  if (m < 0)
    throw NonSquareGrid("make_grid_design: n has no integer p-th root for p = " +
                        std::to_string(p));
  // Lexicographic order over per-axis indices, last axis fastest.
  std::vector<int> idx(p, 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j)
      d.x[static_cast<std::size_t>(i) * p + j] = static_cast<double>(idx[j]) / m;
    for (int j = p - 1; j >= 0; --j) {
      if (++idx[j] <= m) break;
      idx[j] = 1;
    }
  }
  return d;
}

std::vector<double> evaluate_truth(const Dataset& design, const std::string& family,
                                   double alpha, double const_value) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw ConfigInvalid("evaluate_truth: alpha must lie in (0,1]");
  std::vector<double> f0(design.n);
  if (family == "f0_const") {
    for (int i = 0; i < design.n; ++i) f0[i] = const_value;
  } else if (family == "f0_lipschitz") {
    for (int i = 0; i < design.n; ++i)
      f0[i] = 0.5 * std::sin(kTwoPi * design.coord(i, 0));
  } else if (family == "f0_holder") {
    if (!(alpha > 0.5))
      throw ConfigInvalid("evaluate_truth: f0_holder requires alpha in (1/2,1]");
    for (int i = 0; i < design.n; ++i) {
      double sq = 0.0;
      for (int j = 0; j < design.p; ++j) sq += design.coord(i, j) * design.coord(i, j);
      f0[i] = std::pow(std::sqrt(sq), alpha);
    }
  } else if (family == "f0_flat_half") {
    for (int i = 0; i < design.n; ++i) {
      bool in_flat_cube = true;
      for (int j = 0; j < design.p; ++j)
        if (design.coord(i, j) > 0.5) in_flat_cube = false;
      f0[i] = in_flat_cube ? 0.0 : 0.5 * std::sin(kTwoPi * (design.coord(i, 0) - 0.5));
    }
  } else {
    throw UnknownTruthFamily("evaluate_truth: unknown family '" + family + "'");
  }
  return f0;
}

std::pair<Dataset, SimulationTruth> generate_responses(const Dataset& design,
                                                       const std::string& truth_family,
                                                       double alpha, std::uint64_t seed,
                                                       double const_value) {
  Dataset data = design;
  SimulationTruth truth;
  truth.f0_values = evaluate_truth(design, truth_family, alpha, const_value);
  truth.f0_id = truth_family;
  truth.alpha = alpha;
  truth.seed = seed;
  truth.eps.resize(design.n);
  Rng rng(seed);
  for (int i = 0; i < design.n; ++i) truth.eps[i] = rng.normal();
  for (int i = 0; i < design.n; ++i) data.y[i] = truth.f0_values[i] + truth.eps[i];
  return {std::move(data), std::move(truth)};
}

FunctionalWeight make_weight(const Dataset& design, const std::string& family,
                             double gamma) {
  FunctionalWeight w;
  w.family = family;
  w.a_values.resize(design.n);
  if (family == "one") {
    w.gamma = 1.0;
    w.sup_bound = 2.0;
    for (int i = 0; i < design.n; ++i) w.a_values[i] = 1.0;
  } else if (family == "x1") {
    w.gamma = 1.0;
    w.sup_bound = 2.0;
    for (int i = 0; i < design.n; ++i) w.a_values[i] = design.coord(i, 0);
  } else if (family == "kink") {
    if (!(gamma > 0.0 && gamma <= 1.0))
      throw ConfigInvalid("make_weight: gamma must lie in (0,1]");
    w.gamma = gamma;
    w.sup_bound = 1.0;
    for (int i = 0; i < design.n; ++i)
      w.a_values[i] = std::pow(std::abs(design.coord(i, 0) - 0.5), gamma);
  } else {
    throw ConfigInvalid("make_weight: unknown weight family '" + family + "'");
  }
  return w;
}

RegularityVerdict check_design_regularity(const Dataset& design, int max_depth_s,
                                          double M) {
  RegularityVerdict verdict;
  for (int s = 1; s <= max_depth_s; ++s) {
    const double leaves = std::pow(2.0, static_cast<double>(s) * design.p);
    if (leaves > design.n) break;  // k-d tree no longer fits
    TreePartition kd = build_kd_tree(design, s);
    DiameterSummary d = diameter(design, kd);
    RegularityRow row;
    row.s = s;
    for (std::size_t k = 0; k < d.per_cell.size(); ++k) {
      row.max_diam = std::max(row.max_diam, d.per_cell[k]);
      row.typical_diam += d.mu[k] * d.per_cell[k];
    }
    // Zero spread everywhere carries no irregularity.
    row.pass = (row.max_diam == 0.0) || (row.max_diam < M * row.typical_diam);
    if (!row.pass && verdict.first_failing_s == 0) {
      verdict.first_failing_s = s;
      verdict.regular = false;
    }
    verdict.rows.push_back(row);
  }
  return verdict;
}

std::string dataset_to_json(const Dataset& data, const SimulationTruth& truth) {
  nlohmann::json j;
  j["n"] = data.n;
  j["p"] = data.p;
  j["x"] = data.x;
  j["y"] = data.y;
  j["f0"] = truth.f0_values;
  j["eps"] = truth.eps;
  j["seed"] = truth.seed;
  j["family"] = truth.f0_id;
  j["alpha"] = truth.alpha;
  return j.dump();
}

std::pair<Dataset, SimulationTruth> dataset_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw IoError("dataset_from_json: malformed JSON");
  Dataset data;
  SimulationTruth truth;
  try {
    data.n = j.at("n").get<int>();
    data.p = j.at("p").get<int>();
    data.x = j.at("x").get<std::vector<double>>();
    data.y = j.at("y").get<std::vector<double>>();
    truth.f0_values = j.at("f0").get<std::vector<double>>();
    truth.eps = j.at("eps").get<std::vector<double>>();
    truth.seed = j.at("seed").get<std::uint64_t>();
    truth.f0_id = j.at("family").get<std::string>();
    truth.alpha = j.at("alpha").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("dataset_from_json: ") + e.what());
  }
  if (data.x.size() != static_cast<std::size_t>(data.n) * data.p ||
      data.y.size() != static_cast<std::size_t>(data.n) ||
      truth.f0_values.size() != data.y.size() || truth.eps.size() != data.y.size())
    throw IoError("dataset_from_json: inconsistent field lengths");
  return {std::move(data), std::move(truth)};
}

void save_dataset_json(const Dataset& data, const SimulationTruth& truth,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_dataset_json: cannot open " + path);
  out << dataset_to_json(data, truth) << '\n';
  if (!out) throw IoError("save_dataset_json: write failed for " + path);
}

std::pair<Dataset, SimulationTruth> load_dataset_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_dataset_json: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return dataset_from_json(buf.str());
}

void save_dataset_csv(const Dataset& data, const SimulationTruth& truth,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_dataset_csv: cannot open " + path);
  for (int j = 0; j < data.p; ++j) out << "x_" << (j + 1) << ',';
  out << "y,f0,eps\n";
  char buf[32];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (int i = 0; i < data.n; ++i) {
    for (int j = 0; j < data.p; ++j) {
      emit(data.coord(i, j));
      out << ',';
    }
    emit(data.y[i]);
    out << ',';
    emit(truth.f0_values[i]);
    out << ',';
    emit(truth.eps[i]);
    out << '\n';
  }
  if (!out) throw IoError("save_dataset_csv: write failed for " + path);
}

}  // namespace treebvm
