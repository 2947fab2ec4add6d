#include <benchmark/benchmark.h>

#include <vector>

#include "treebvm/approx.hpp"
#include "treebvm/dataset.hpp"
#include "treebvm/mcmc.hpp"
#include "treebvm/partition.hpp"
#include "treebvm/priors.hpp"
#include "treebvm/rng.hpp"

using namespace treebvm;

namespace {

struct Fixture {
  Dataset data;
  SimulationTruth truth;
  FunctionalWeight weight;

  explicit Fixture(int n) {
    const Dataset design = make_grid_design(n, 1);
    auto generated = generate_responses(design, "f0_lipschitz", 1.0, 1234);
    data = std::move(generated.first);
    truth = std::move(generated.second);
    weight = make_weight(data, "one", 1.0);
  }
};

}  // namespace

static void BM_leaf_marginal_gaussian(benchmark::State& state) {
  Fixture fx(1024);
  const TreePartition partition = equivalent_blocks(fx.data, static_cast<int>(state.range(0)));
  const LeafPrior prior = make_gaussian_scaled_leaf_prior();
  for (auto _ : state)
    benchmark::DoNotOptimize(leaf_marginal_loglik(partition, fx.data.y, prior));
}
BENCHMARK(BM_leaf_marginal_gaussian)->Arg(4)->Arg(16)->Arg(64);

static void BM_leaf_marginal_laplace(benchmark::State& state) {
  Fixture fx(1024);
  const TreePartition partition = equivalent_blocks(fx.data, static_cast<int>(state.range(0)));
  const LeafPrior prior = make_laplace_scaled_leaf_prior(1.0);
  for (auto _ : state)
    benchmark::DoNotOptimize(leaf_marginal_loglik(partition, fx.data.y, prior));
}
BENCHMARK(BM_leaf_marginal_laplace)->Arg(4)->Arg(16)->Arg(64);

static void BM_mh_step(benchmark::State& state) {
  Fixture fx(static_cast<int>(state.range(0)));
  SamplerConfig config;
  config.tree_prior.gw = make_chipman_prior(0.95, 2.0);
  config.leaf_prior = make_gaussian_leaf_prior(1.0);
  TreeState tree{root_partition(fx.data), {0.0}};
  Rng rng(7);
  for (auto _ : state) benchmark::DoNotOptimize(mh_step(tree, config, fx.data, rng));
}
BENCHMARK(BM_mh_step)->Arg(256)->Arg(2048);

static void BM_chain_iteration(benchmark::State& state) {
  Fixture fx(static_cast<int>(state.range(0)));
  SamplerConfig config;
  config.tree_prior.gw = make_chipman_prior(0.95, 2.0);
  config.leaf_prior = make_gaussian_leaf_prior(1.0);
  config.iterations = 200;
  config.burn_in = 0;
  config.seed = 21;
  for (auto _ : state) {
    auto result = run_chain(config, fx.data, &fx.weight);
    benchmark::DoNotOptimize(result.second.draws_emitted);
  }
  state.SetItemsProcessed(state.iterations() * config.iterations);
}
BENCHMARK(BM_chain_iteration)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

static void BM_backfitting_iteration(benchmark::State& state) {
  Fixture fx(1024);
  SamplerConfig config;
  config.tree_prior.gw = make_chipman_prior(0.95, 2.0);
  config.leaf_prior = make_gaussian_scaled_leaf_prior();
  config.n_trees = static_cast<int>(state.range(0));
  config.iterations = 50;
  config.burn_in = 0;
  config.seed = 22;
  for (auto _ : state) {
    auto result = run_chain(config, fx.data, &fx.weight);
    benchmark::DoNotOptimize(result.second.draws_emitted);
  }
  state.SetItemsProcessed(state.iterations() * config.iterations);
}
BENCHMARK(BM_backfitting_iteration)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

static void BM_merged_partition(benchmark::State& state) {
  Fixture fx(1024);
  Rng rng(5);
  SamplerConfig config;
  config.tree_prior.gw = make_chipman_prior(0.95, 2.0);
  config.leaf_prior = make_gaussian_scaled_leaf_prior();
  config.n_trees = 10;
  config.iterations = 30;
  config.burn_in = 29;
  config.seed = 23;
  auto [draws, diag] = run_chain(config, fx.data, &fx.weight);
  (void)diag;
  const Ensemble& ensemble = draws.back().forest.ensemble;
  for (auto _ : state) {
    CellPartition merged = merged_partition(ensemble, fx.data.n);
    benchmark::DoNotOptimize(merged.cells.size());
  }
}
BENCHMARK(BM_merged_partition);

static void BM_centering_estimators(benchmark::State& state) {
  Fixture fx(4096);
  const TreePartition partition = equivalent_blocks(fx.data, 32);
  for (auto _ : state) {
    CenteringPair pair = centering_estimators(partition, fx.data, fx.truth, fx.weight);
    benchmark::DoNotOptimize(pair.psi_hat_T);
  }
}
BENCHMARK(BM_centering_estimators);

BENCHMARK_MAIN();
