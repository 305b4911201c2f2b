#include <benchmark/benchmark.h>

#include <random>

#include "pdoa/adapt.hpp"
#include "pdoa/core.hpp"
#include "pdoa/env.hpp"
#include "pdoa/eval.hpp"
#include "pdoa/learner.hpp"
#include "pdoa/random.hpp"

namespace {

const pdoa::CmoMdpSpec& grid_env() {
  static const pdoa::CmoMdpSpec mdp = pdoa::make_env("cmo-grid");
  return mdp;
}

const pdoa::OfflineDataset& small_dataset() {
  static const pdoa::OfflineDataset ds = [] {
    pdoa::BehaviorPolicySet behaviors;
    behaviors.preferences = pdoa::default_behavior_preferences();
    return pdoa::generate_dataset(grid_env(), behaviors, 4, 7);
  }();
  return ds;
}

const pdoa::PolicyBundle& small_bundle() {
  static const pdoa::PolicyBundle bundle = [] {
    pdoa::RegularizedConfig cfg;
    cfg.grid = 5;
    cfg.sweeps = 50;
    return pdoa::train_regularized(small_dataset(), cfg);
  }();
  return bundle;
}

void BM_ScalarizedValueIteration(benchmark::State& state) {
  const pdoa::PreferenceVector w = pdoa::normalize_preference({0.7, 0.3});
  for (auto _ : state) {
    auto solution = pdoa::scalarized_value_iteration(grid_env(), w);
    benchmark::DoNotOptimize(solution);
  }
}
BENCHMARK(BM_ScalarizedValueIteration);

void BM_TrainRegularized(benchmark::State& state) {
  pdoa::RegularizedConfig cfg;
  cfg.grid = 5;
  cfg.sweeps = 50;
  for (auto _ : state) {
    auto bundle = pdoa::train_regularized(small_dataset(), cfg);
    benchmark::DoNotOptimize(bundle);
  }
}
BENCHMARK(BM_TrainRegularized);

void BM_AdaptationGradientBatch(benchmark::State& state) {
  const pdoa::PolicyBundle& bundle = small_bundle();
  const pdoa::OfflineDataset& ds = small_dataset();
  pdoa::Target target;
  target.preference = pdoa::normalize_preference({0.8, 0.2});
  const pdoa::DemonstrationSet demos = pdoa::build_demo_set(ds, target, 32, 2, 11);
  const pdoa::GaussianPreferenceDistribution prior = pdoa::fit_preference_prior(ds);
  pdoa::AdaptationConfig cfg;
  std::mt19937_64 rng = pdoa::make_rng(3);
  for (auto _ : state) {
    auto grad = pdoa::objective_gradient(bundle, demos, prior, prior, cfg, 64, rng);
    benchmark::DoNotOptimize(grad);
  }
}
BENCHMARK(BM_AdaptationGradientBatch);

void BM_Hypervolume3D(benchmark::State& state) {
  std::mt19937_64 rng = pdoa::make_rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<pdoa::RewardVector> points(static_cast<std::size_t>(state.range(0)));
  for (auto& p : points) p = {unit(rng), unit(rng), unit(rng)};
  const pdoa::RewardVector ref{0.0, 0.0, 0.0};
  for (auto _ : state) {
    double hv = pdoa::hypervolume(pdoa::pareto_filter(points), ref);
    benchmark::DoNotOptimize(hv);
  }
}
BENCHMARK(BM_Hypervolume3D)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
