#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "treebvm/approx.hpp"
#include "treebvm/bvm.hpp"
#include "treebvm/dataset.hpp"
#include "treebvm/errors.hpp"
#include "treebvm/mcmc.hpp"
#include "treebvm/partition.hpp"
#include "treebvm/rng.hpp"
#include "treebvm/stats.hpp"

using namespace treebvm;

namespace {

SamplerConfig quick_sampler(std::uint64_t seed, long iterations, long burn_in) {
  SamplerConfig config;
  config.tree_prior.family = TreePriorSpec::Family::galton_watson;
  config.tree_prior.gw = make_chipman_prior(0.9, 2.0);
  config.leaf_prior = make_gaussian_leaf_prior(1.0);
  config.iterations = iterations;
  config.burn_in = burn_in;
  config.seed = seed;
  return config;
}

// draws whose fitted values are exactly the given function
std::vector<PosteriorDraw> constant_draws(const Dataset& design, const std::vector<double>& f,
                                          int count) {
  PosteriorDraw draw;
  draw.forest.ensemble.trees.push_back(root_partition(design));
  draw.forest.betas.push_back({0.0});
  draw.fitted_values = f;
  return std::vector<PosteriorDraw>(static_cast<std::size_t>(count), draw);
}

}  // namespace

TEST_CASE("centering mode names round-trip") {
  for (CenteringMode mode : {CenteringMode::per_partition_psi_hat_T, CenteringMode::global_psi_n,
                             CenteringMode::posterior_mean})
    CHECK(centering_mode_from_name(centering_mode_name(mode)) == mode);
  CHECK_THROWS_AS(centering_mode_from_name("median"), ConfigInvalid);
}

TEST_CASE("centered draws") {
  const Dataset design = make_grid_design(64, 1);
  auto [data, truth] = generate_responses(design, "f0_lipschitz", 1.0, 31);
  const FunctionalWeight weight = make_weight(data, "x1", 1.0);

  SUBCASE("draws frozen at f0 with zero noise center to zero under global_psi_n") {
    SimulationTruth clean = truth;
    std::fill(clean.eps.begin(), clean.eps.end(), 0.0);
    const std::vector<PosteriorDraw> draws = constant_draws(design, clean.f0_values, 5);
    const std::vector<double> taus =
        centered_draws(draws, data, &clean, weight, CenteringMode::global_psi_n);
    for (double t : taus) CHECK(t == 0.0);
  }
  SUBCASE("posterior_mean centering has exact mean zero") {
    auto [draws, diag] = run_chain(quick_sampler(7, 600, 100), data, &weight);
    REQUIRE(!draws.empty());
    const std::vector<double> taus =
        centered_draws(draws, data, nullptr, weight, CenteringMode::posterior_mean);
    double mean = 0.0;
    for (double t : taus) mean += t;
    mean /= static_cast<double>(taus.size());
    CHECK(std::abs(mean) < 1e-9);
  }
  SUBCASE("oracle centerings differ by the per-draw centering gap") {
    auto [draws, diag] = run_chain(quick_sampler(8, 600, 100), data, &weight);
    REQUIRE(!draws.empty());
    const std::vector<double> pp =
        centered_draws(draws, data, &truth, weight, CenteringMode::per_partition_psi_hat_T);
    const std::vector<double> gl =
        centered_draws(draws, data, &truth, weight, CenteringMode::global_psi_n);
    const double root_n = std::sqrt(64.0);
    double max_gap = 0.0;
    for (const PosteriorDraw& draw : draws) {
      const CellPartition merged = merged_partition(draw.forest.ensemble, data.n);
      const CenteringPair pair = centering_estimators(merged.cells, data, truth, weight);
      max_gap = std::max(max_gap, root_n * std::abs(pair.psi_n - pair.psi_hat_T));
    }
    for (std::size_t d = 0; d < pp.size(); ++d)
      CHECK(std::abs(pp[d] - gl[d]) <= max_gap + 1e-12);
  }
  SUBCASE("oracle modes demand the truth") {
    const std::vector<PosteriorDraw> draws = constant_draws(design, truth.f0_values, 3);
    CHECK_THROWS_AS(
        centered_draws(draws, data, nullptr, weight, CenteringMode::global_psi_n), MissingTruth);
    CHECK_THROWS_AS(
        centered_draws(draws, data, nullptr, weight, CenteringMode::per_partition_psi_hat_T),
        MissingTruth);
    SimulationTruth stub;  // wrong lengths
    CHECK_THROWS_AS(centered_draws(draws, data, &stub, weight, CenteringMode::global_psi_n),
                    MissingTruth);
    CHECK_NOTHROW(centered_draws(draws, data, nullptr, weight, CenteringMode::posterior_mean));
  }
  SUBCASE("no draws is an error") {
    CHECK_THROWS_AS(centered_draws({}, data, &truth, weight, CenteringMode::posterior_mean),
                    TooFewDraws);
  }
}

TEST_CASE("distance_to_gaussian") {
  SUBCASE("all-zero draws against the unit Gaussian have ks one half") {
    const std::vector<double> zeros(200, 0.0);
    const GaussianDistance dist = distance_to_gaussian(zeros, 1.0);
    CHECK(dist.ks == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("exact Gaussian quantiles drive both metrics down with size") {
    const double V0 = 2.3;
    const auto quantile_set = [&](int m) {
      std::vector<double> out(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i)
        out[static_cast<std::size_t>(i)] =
            std::sqrt(V0) * normal_quantile((i + 0.5) / static_cast<double>(m));
      return out;
    };
    const GaussianDistance coarse = distance_to_gaussian(quantile_set(200), V0);
    const GaussianDistance fine = distance_to_gaussian(quantile_set(2000), V0);
    CHECK(fine.ks < coarse.ks);
    CHECK(fine.w1 < coarse.w1);
    CHECK(fine.ks <= 1.0 / (2.0 * 2000.0) + 1e-6);
  }
  SUBCASE("affine rescaling leaves ks invariant and scales w1") {
    Rng rng(5151);
    std::vector<double> draws(500);
    for (double& v : draws) v = 1.3 * rng.normal() + 0.2;
    const GaussianDistance base = distance_to_gaussian(draws, 1.7);
    const double c = 3.7;
    std::vector<double> scaled = draws;
    for (double& v : scaled) v *= c;
    const GaussianDistance after = distance_to_gaussian(scaled, 1.7 * c * c);
    CHECK(std::abs(after.ks - base.ks) < 1e-12);
    CHECK(std::abs(after.w1 - c * base.w1) < 1e-9 * c);
  }
  SUBCASE("permutation invariance") {
    Rng rng(5152);
    std::vector<double> draws(300);
    for (double& v : draws) v = rng.normal();
    std::vector<double> shuffled = draws;
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(rng.uniform_int(
                                     static_cast<std::int64_t>(i)))]);
    const GaussianDistance a = distance_to_gaussian(draws, 1.0);
    const GaussianDistance b = distance_to_gaussian(shuffled, 1.0);
    CHECK(a.ks == b.ks);
    CHECK(a.w1 == b.w1);
  }
  SUBCASE("guards") {
    const std::vector<double> few(99, 0.0);
    CHECK_THROWS_AS(distance_to_gaussian(few, 1.0), TooFewDraws);
    const std::vector<double> enough(100, 0.0);
    CHECK_THROWS_AS(distance_to_gaussian(enough, 0.0), ConfigInvalid);
    CHECK_THROWS_AS(distance_to_gaussian(enough, -1.0), ConfigInvalid);
  }
}

TEST_CASE("lemma1_concentration") {
  const Dataset design = make_grid_design(16, 1);
  auto [data, truth] = generate_responses(design, "f0_lipschitz", 1.0, 99);

  SamplerConfig sampler = quick_sampler(12, 500, 100);
  sampler.max_depth = 2;  // at most 4 leaves per tree
  auto [draws, diag] = run_chain(sampler, data);
  REQUIRE(!draws.empty());

  SUBCASE("depth cap forces frac_small_k to one when K_n exceeds the reachable count") {
    const ConcentrationFractions frac = lemma1_concentration(draws, data, 1.0, 1.0, 1.0, 2.0);
    CHECK(frac.k_n == kn_lemma1(16, 1.0, 1, 2.0));
    CHECK(frac.k_n >= 4);
    CHECK(frac.frac_small_k == 1.0);
    CHECK(frac.frac_both <= frac.frac_regular);
    CHECK(frac.frac_both <= frac.frac_small_k);
  }
  SUBCASE("frac_regular is nondecreasing in M_n") {
    double last = -1.0;
    for (double mn : {0.3, 0.8, 1.5, 3.0}) {
      const ConcentrationFractions frac = lemma1_concentration(draws, data, 1.0, 1.0, mn, 1.0);
      CHECK(frac.frac_regular >= last);
      last = frac.frac_regular;
    }
  }
  SUBCASE("no draws is an error") {
    CHECK_THROWS_AS(lemma1_concentration({}, data, 1.0, 1.0, 1.0, 1.0), TooFewDraws);
  }
}

TEST_CASE("equal-tailed credible intervals") {
  SUBCASE("degenerate draws give a zero-width interval that covers the point") {
    const std::vector<double> draws(50, 0.37);
    const CredibleInterval ci = equal_tailed_interval(draws, 0.9);
    CHECK(ci.lo == 0.37);
    CHECK(ci.hi == 0.37);
    CHECK((ci.lo <= 0.37 && 0.37 <= ci.hi));
  }
  SUBCASE("higher levels nest lower levels on the same draws") {
    Rng rng(717);
    std::vector<double> draws(400);
    for (double& v : draws) v = rng.normal();
    const CredibleInterval narrow = equal_tailed_interval(draws, 0.8);
    const CredibleInterval wide = equal_tailed_interval(draws, 0.95);
    CHECK(wide.lo <= narrow.lo);
    CHECK(narrow.hi <= wide.hi);
  }
  SUBCASE("guards") {
    CHECK_THROWS_AS(equal_tailed_interval({}, 0.9), TooFewDraws);
    CHECK_THROWS_AS(equal_tailed_interval({1.0}, 0.0), ConfigInvalid);
    CHECK_THROWS_AS(equal_tailed_interval({1.0}, 1.0), ConfigInvalid);
  }
}

TEST_CASE("coverage_experiment") {
  CoverageConfig config;
  config.truth_family = "f0_lipschitz";
  config.n = 16;
  config.p = 1;
  config.weight_family = "one";
  config.sampler = quick_sampler(0, 500, 100);
  config.nominal_level = 0.9;
  config.n_reps = 6;
  config.seed = 20260814;

  SUBCASE("deterministic and thread-count independent") {
    const CoverageResult serial = coverage_experiment(config);
    CoverageConfig threaded = config;
    threaded.threads = 3;
    const CoverageResult parallel = coverage_experiment(threaded);
    CHECK(serial.hits == parallel.hits);
    CHECK(serial.empirical_coverage == parallel.empirical_coverage);
    CHECK(serial.interval_widths.mean == parallel.interval_widths.mean);
    CHECK(serial.min_ess == parallel.min_ess);

    const CoverageResult again = coverage_experiment(config);
    CHECK(serial.hits == again.hits);
    CHECK(serial.interval_widths.mean == again.interval_widths.mean);
  }
  SUBCASE("result shape") {
    const CoverageResult result = coverage_experiment(config);
    CHECK(result.n_reps == 6);
    CHECK(result.hits <= result.n_reps);
    CHECK(result.hits >= 0);
    CHECK(result.empirical_coverage == static_cast<double>(result.hits) / 6.0);
    CHECK(result.interval_widths.min <= result.interval_widths.mean);
    CHECK(result.interval_widths.mean <= result.interval_widths.max);
    CHECK(result.interval_widths.min > 0.0);
    CHECK(result.min_ess > 0.0);
  }
  SUBCASE("guards") {
    CoverageConfig bad = config;
    bad.n_reps = 0;
    CHECK_THROWS_AS(coverage_experiment(bad), ConfigInvalid);
    bad = config;
    bad.nominal_level = 1.0;
    CHECK_THROWS_AS(coverage_experiment(bad), ConfigInvalid);
    bad = config;
    bad.sampler.thin = 0;
    CHECK_THROWS_AS(coverage_experiment(bad), ConfigInvalid);
  }
}

TEST_CASE("run_bvm_experiment produces a coherent report") {
  BvmExperimentConfig config;
  config.truth_family = "f0_lipschitz";
  config.alpha = 1.0;
  config.n = 64;
  config.p = 1;
  config.data_seed = 4;
  config.weight_family = "one";
  config.gamma = 1.0;
  config.sampler = quick_sampler(44, 2600, 600);
  config.centering = CenteringMode::per_partition_psi_hat_T;
  config.min_ess = 50.0;

  const BvmReport report = run_bvm_experiment(config);
  CHECK(report.n == 64);
  CHECK(report.V0 == 1.0);  // constant weight: exactly one
  CHECK(report.tau_draws.size() == 2000);
  CHECK(report.ks_stat >= 0.0);
  CHECK(report.ks_stat <= 1.0);
  CHECK(report.w1_stat >= 0.0);
  CHECK(report.centering_mode == CenteringMode::per_partition_psi_hat_T);
  CHECK(report.concentration.k_n == kn_lemma1(64, 1.0, 1, 1.0));
  CHECK(report.ess_psi == report.diagnostics.ess_psi);
  CHECK(report.conclusive == (report.ess_psi >= 50.0));
  CHECK(report.diagnostics.draws_emitted == 2000);

  SUBCASE("posterior_mean centering yields mean-zero taus") {
    BvmExperimentConfig alt = config;
    alt.centering = CenteringMode::posterior_mean;
    const BvmReport r2 = run_bvm_experiment(alt);
    double mean = 0.0;
    for (double t : r2.tau_draws) mean += t;
    mean /= static_cast<double>(r2.tau_draws.size());
    CHECK(std::abs(mean) < 1e-8);
  }
}

TEST_CASE("laplace_concentration_check reports a contracting error") {
  ConcentrationConfig config;
  config.truth_family = "f0_const";
  config.const_value = 0.7;
  config.alpha = 1.0;
  config.p = 1;
  config.sampler = quick_sampler(0, 2000, 500);
  config.sampler.leaf_prior = make_laplace_scaled_leaf_prior(1.0);
  config.seed = 314;

  const std::vector<ConcentrationRow> rows = laplace_concentration_check({64, 256}, config);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].n == 64);
  CHECK(rows[1].n == 256);
  for (const ConcentrationRow& row : rows) {
    CHECK(row.mean_error > 0.0);
    CHECK(row.epsilon == epsilon_n(row.n, 1.0, 1));
    CHECK(row.ratio == doctest::Approx(row.mean_error / row.epsilon));
    CHECK(row.ess > 0.0);
  }
  // constant truth sits inside the model: the error must shrink with n
  CHECK(rows[1].mean_error < rows[0].mean_error);

  SUBCASE("empty grid gives an empty table") {
    CHECK(laplace_concentration_check({}, config).empty());
  }
}
