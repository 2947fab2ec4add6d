#include "treebvm/bvm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>
#include <utility>

#include "treebvm/approx.hpp"
#include "treebvm/errors.hpp"
#include "treebvm/partition.hpp"
#include "treebvm/rng.hpp"
#include "treebvm/stats.hpp"

namespace treebvm {

namespace {

const SimulationTruth& require_truth(const SimulationTruth* truth, int n, const char* where) {
  if (!truth || static_cast<int>(truth->f0_values.size()) != n ||
      static_cast<int>(truth->eps.size()) != n)
    throw MissingTruth(std::string(where) + ": oracle centering needs the simulation truth");
  return *truth;
}

}  // namespace

std::string centering_mode_name(CenteringMode mode) {
  switch (mode) {
    case CenteringMode::per_partition_psi_hat_T:
      return "per_partition_psi_hat_T";
    case CenteringMode::global_psi_n:
      return "global_psi_n";
    case CenteringMode::posterior_mean:
      return "posterior_mean";
  }
  throw ConfigInvalid("centering_mode_name: unknown mode");
}

CenteringMode centering_mode_from_name(const std::string& name) {
  if (name == "per_partition_psi_hat_T") return CenteringMode::per_partition_psi_hat_T;
  if (name == "global_psi_n") return CenteringMode::global_psi_n;
  if (name == "posterior_mean") return CenteringMode::posterior_mean;
  throw ConfigInvalid(
      "centering must be per_partition_psi_hat_T, global_psi_n, or posterior_mean");
}

std::vector<double> centered_draws(const std::vector<PosteriorDraw>& draws, const Dataset& data,
                                   const SimulationTruth* truth, const FunctionalWeight& weight,
                                   CenteringMode mode) {
  if (draws.empty()) throw TooFewDraws("centered_draws: no draws");
  if (static_cast<int>(weight.a_values.size()) != data.n)
    throw LengthMismatch("centered_draws: weight length does not match the data");
  const double root_n = std::sqrt(static_cast<double>(data.n));

  std::vector<double> psi_f(draws.size());
  for (std::size_t d = 0; d < draws.size(); ++d) psi_f[d] = psi(draws[d].fitted_values, weight);

  std::vector<double> taus(draws.size());
  switch (mode) {
    case CenteringMode::posterior_mean: {
      double mean = 0.0;
      for (double v : psi_f) mean += v;
      mean /= static_cast<double>(psi_f.size());
      for (std::size_t d = 0; d < draws.size(); ++d) taus[d] = root_n * (psi_f[d] - mean);
      break;
    }
    case CenteringMode::global_psi_n: {
      const SimulationTruth& tr = require_truth(truth, data.n, "centered_draws");
      const double center =
          psi(tr.f0_values, weight) + empirical_inner_product(weight.a_values, tr.eps);
      for (std::size_t d = 0; d < draws.size(); ++d) taus[d] = root_n * (psi_f[d] - center);
      break;
    }
    case CenteringMode::per_partition_psi_hat_T: {
      const SimulationTruth& tr = require_truth(truth, data.n, "centered_draws");
      for (std::size_t d = 0; d < draws.size(); ++d) {
        const CellPartition merged = merged_partition(draws[d].forest.ensemble, data.n);
        const CenteringPair pair = centering_estimators(merged.cells, data, tr, weight);
        taus[d] = root_n * (psi_f[d] - pair.psi_hat_T);
      }
      break;
    }
  }
  return taus;
}

GaussianDistance distance_to_gaussian(const std::vector<double>& tau_draws, double V0) {
  if (tau_draws.size() < 100) throw TooFewDraws("distance_to_gaussian: need at least 100 draws");
  if (!(V0 > 0.0)) throw ConfigInvalid("distance_to_gaussian: V0 must be positive");
  const double sd = std::sqrt(V0);
  GaussianDistance out;
  out.ks = ks_distance_gaussian(tau_draws, sd);
  out.w1 = w1_distance_gaussian(tau_draws, sd);
  return out;
}

ConcentrationFractions lemma1_concentration(const std::vector<PosteriorDraw>& draws,
                                            const Dataset& design, double alpha, double M,
                                            double M_n, double M2) {
  if (draws.empty()) throw TooFewDraws("lemma1_concentration: no draws");
  ConcentrationFractions out;
  out.k_n = kn_lemma1(design.n, alpha, design.p, M2);
  long regular = 0;
  long small = 0;
  long both = 0;
  for (const PosteriorDraw& draw : draws) {
    const CellPartition merged = merged_partition(draw.forest.ensemble, design.n);
    const bool small_k = static_cast<int>(merged.cells.size()) <= out.k_n;
    const DiameterSummary ds = diameter(design, merged.cells);
    const bool regular_k = is_n_regular(ds.total, alpha, design.n, design.p, M, M_n);
    regular += regular_k ? 1 : 0;
    small += small_k ? 1 : 0;
    both += (regular_k && small_k) ? 1 : 0;
  }
  const double denom = static_cast<double>(draws.size());
  out.frac_regular = static_cast<double>(regular) / denom;
  out.frac_small_k = static_cast<double>(small) / denom;
  out.frac_both = static_cast<double>(both) / denom;
  return out;
}

BvmReport run_bvm_experiment(const BvmExperimentConfig& config) {
  const Dataset design = make_grid_design(config.n, config.p);
  auto [data, truth] = generate_responses(design, config.truth_family, config.alpha,
                                          config.data_seed, config.const_value);
  const FunctionalWeight weight = make_weight(data, config.weight_family, config.gamma);

  BvmReport report;
  report.n = config.n;
  report.alpha = config.alpha;
  report.gamma = weight.gamma;
  report.centering_mode = config.centering;
  report.V0 = empirical_inner_product(weight.a_values, weight.a_values);

  auto [draws, diag] = run_chain(config.sampler, data, &weight);
  report.diagnostics = diag;
  report.ess_psi = diag.ess_psi;
  report.conclusive = diag.ess_psi >= config.min_ess;

  report.tau_draws = centered_draws(draws, data, &truth, weight, config.centering);
  const GaussianDistance dist = distance_to_gaussian(report.tau_draws, report.V0);
  report.ks_stat = dist.ks;
  report.w1_stat = dist.w1;

  const double mn =
      config.M_n > 0.0 ? config.M_n : std::sqrt(std::log(static_cast<double>(config.n)));
  report.concentration = lemma1_concentration(draws, data, config.alpha, config.M, mn, config.M2);
  return report;
}

CredibleInterval equal_tailed_interval(std::vector<double> psi_draws, double level) {
  if (psi_draws.empty()) throw TooFewDraws("equal_tailed_interval: no draws");
  if (!(level > 0.0 && level < 1.0))
    throw ConfigInvalid("equal_tailed_interval: level must lie in (0, 1)");
  std::sort(psi_draws.begin(), psi_draws.end());
  const double tail = 0.5 * (1.0 - level);
  CredibleInterval ci;
  ci.lo = quantile_sorted(psi_draws, tail);
  ci.hi = quantile_sorted(psi_draws, 1.0 - tail);
  return ci;
}

CoverageResult coverage_experiment(const CoverageConfig& config) {
  if (config.n_reps < 1) throw ConfigInvalid("coverage: n_reps must be at least 1");
  if (!(config.nominal_level > 0.0 && config.nominal_level < 1.0))
    throw ConfigInvalid("coverage: nominal_level must lie in (0, 1)");

  const Dataset design = make_grid_design(config.n, config.p);
  validate_sampler_config(config.sampler, design);
  const FunctionalWeight weight = make_weight(design, config.weight_family, config.gamma);
  const std::vector<double> f0 =
      evaluate_truth(design, config.truth_family, config.alpha, config.const_value);
  const double psi0 = psi(f0, weight);

  struct RepResult {
    bool hit = false;
    double width = 0.0;
    double ess = 0.0;
  };
  std::vector<RepResult> results(static_cast<std::size_t>(config.n_reps));

  const auto run_rep = [&](int r) {
    const std::uint64_t data_seed = derive_stream(config.seed, 2 * static_cast<std::uint64_t>(r));
    const std::uint64_t chain_seed =
        derive_stream(config.seed, 2 * static_cast<std::uint64_t>(r) + 1);
    auto [data, truth] = generate_responses(design, config.truth_family, config.alpha, data_seed,
                                            config.const_value);
    SamplerConfig sampler = config.sampler;
    sampler.seed = chain_seed;
    std::vector<double> psis;
    const ChainDiagnostics diag = run_chain_stream(
        sampler, data, &weight, [&](const PosteriorDraw& draw) { psis.push_back(draw.psi_value); });
    const CredibleInterval ci = equal_tailed_interval(psis, config.nominal_level);
    RepResult& res = results[static_cast<std::size_t>(r)];
    res.hit = ci.lo <= psi0 && psi0 <= ci.hi;
    res.width = ci.hi - ci.lo;
    res.ess = diag.ess_psi;
  };

  const int workers = std::max(1, std::min(config.threads, config.n_reps));
  if (workers == 1) {
    for (int r = 0; r < config.n_reps; ++r) run_rep(r);
  } else {
    std::vector<std::exception_ptr> failures(static_cast<std::size_t>(config.n_reps));
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int r = next.fetch_add(1); r < config.n_reps; r = next.fetch_add(1)) {
          try {
            run_rep(r);
          } catch (...) {
            failures[static_cast<std::size_t>(r)] = std::current_exception();
          }
        }
      });
    for (std::thread& th : pool) th.join();
    for (std::exception_ptr& failure : failures)
      if (failure) std::rethrow_exception(failure);
  }

  CoverageResult out;
  out.nominal_level = config.nominal_level;
  out.n_reps = config.n_reps;
  double width_sum = 0.0;
  double width_min = std::numeric_limits<double>::infinity();
  double width_max = -std::numeric_limits<double>::infinity();
  double ess_min = std::numeric_limits<double>::infinity();
  for (const RepResult& res : results) {
    out.hits += res.hit ? 1 : 0;
    width_sum += res.width;
    width_min = std::min(width_min, res.width);
    width_max = std::max(width_max, res.width);
    ess_min = std::min(ess_min, res.ess);
  }
  out.empirical_coverage = static_cast<double>(out.hits) / static_cast<double>(config.n_reps);
  out.interval_widths.mean = width_sum / static_cast<double>(config.n_reps);
  out.interval_widths.min = width_min;
  out.interval_widths.max = width_max;
  out.min_ess = ess_min;
  return out;
}

std::vector<ConcentrationRow> laplace_concentration_check(const std::vector<int>& grid_of_n,
                                                          const ConcentrationConfig& config) {
  std::vector<ConcentrationRow> rows;
  rows.reserve(grid_of_n.size());
  for (std::size_t g = 0; g < grid_of_n.size(); ++g) {
    const int n = grid_of_n[g];
    const Dataset design = make_grid_design(n, config.p);
    const std::uint64_t data_seed = derive_stream(config.seed, 2 * g);
    const std::uint64_t chain_seed = derive_stream(config.seed, 2 * g + 1);
    auto [data, truth] = generate_responses(design, config.truth_family, config.alpha, data_seed,
                                            config.const_value);
    SamplerConfig sampler = config.sampler;
    sampler.seed = chain_seed;
    std::vector<double> errors;
    run_chain_stream(sampler, data, nullptr, [&](const PosteriorDraw& draw) {
      errors.push_back(empirical_norm(draw.fitted_values, truth.f0_values));
    });
    if (errors.empty()) throw TooFewDraws("laplace_concentration_check: chain emitted no draws");
    ConcentrationRow row;
    row.n = n;
    double sum = 0.0;
    for (double e : errors) sum += e;
    row.mean_error = sum / static_cast<double>(errors.size());
    row.epsilon = epsilon_n(n, config.alpha, config.p);
    row.ratio = row.mean_error / row.epsilon;
    row.ess = effective_sample_size(errors);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace treebvm
