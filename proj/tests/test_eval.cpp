#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdoa/core.hpp"
#include "pdoa/env.hpp"
#include "pdoa/eval.hpp"
#include "pdoa/learner.hpp"
#include "pdoa/types.hpp"
#include "support.hpp"

using namespace pdoa;

namespace {

EvaluationRow make_row(int index, TargetKind kind, std::optional<PreferenceVector> pref,
                       std::optional<CostVector> threshold, RewardVector ret, double utility) {
  EvaluationRow row;
  row.target_index = index;
  row.target.kind = kind;
  row.target.preference = std::move(pref);
  row.target.threshold = std::move(threshold);
  row.adapted_preference = PreferenceVector{{0.5, 0.5}};
  row.return_vector = std::move(ret);
  row.utility = utility;
  return row;
}

const OfflineDataset& chain_data() {
  static const OfflineDataset ds = [] {
    BehaviorPolicySet behaviors;
    behaviors.preferences = preference_range(0.2, 0.9, 5);
    behaviors.epsilon = 0.2;
    return generate_dataset(testsup::chain_env(), behaviors, 8, 23);
  }();
  return ds;
}

const PolicyBundle& chain_bundle() {
  static const PolicyBundle b = [] {
    RegularizedConfig cfg;
    cfg.grid = 5;
    cfg.bandwidth = 0.2;
    cfg.temperature = 0.1;
    cfg.sweeps = 20;
    cfg.gamma = 0.9;
    return train_regularized(chain_data(), cfg);
  }();
  return b;
}

EvaluationConfig small_eval_config() {
  EvaluationConfig cfg;
  cfg.adapt.steps = 40;
  cfg.adapt.samples_per_step = 8;
  cfg.demo_m = 16;
  cfg.demo_k = 2;
  cfg.episodes = 5;
  return cfg;
}

}  // namespace

TEST_CASE("average utility filters by threshold group") {
  std::vector<EvaluationRow> rows;
  rows.push_back(make_row(0, TargetKind::preference, PreferenceVector{{0.5, 0.5}}, std::nullopt,
                          {4.0, 2.0}, 3.0));
  rows.push_back(make_row(1, TargetKind::both, PreferenceVector{{0.5, 0.5}}, CostVector{2.0},
                          {1.0, 1.0}, 1.0));
  rows.push_back(make_row(2, TargetKind::both, PreferenceVector{{0.5, 0.5}}, CostVector{2.0},
                          {3.0, 3.0}, 3.0));

  CHECK(average_utility(rows) == doctest::Approx((3.0 + 1.0 + 3.0) / 3.0).epsilon(1e-12));
  CHECK(average_utility(rows, CostVector{2.0}) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(average_utility(rows, CostVector{9.9}), std::invalid_argument);
  CHECK_THROWS_AS(average_utility({}), std::invalid_argument);

  std::vector<EvaluationRow> shuffled{rows[2], rows[0], rows[1]};
  CHECK(average_utility(shuffled) == doctest::Approx(average_utility(rows)).epsilon(1e-12));
}

TEST_CASE("pareto filter keeps exactly the non-dominated points") {
  const std::vector<RewardVector> fan{{1.0, 3.0}, {2.0, 2.0}, {3.0, 1.0}};
  CHECK(pareto_filter(fan) == fan);

  CHECK(pareto_filter({{1.0, 1.0}, {2.0, 2.0}}) == std::vector<RewardVector>{{2.0, 2.0}});
  CHECK(pareto_filter({{2.0, 2.0}, {2.0, 2.0}, {1.0, 3.0}}) ==
        std::vector<RewardVector>{{2.0, 2.0}, {1.0, 3.0}});
  CHECK(pareto_filter({}).empty());
}

TEST_CASE("hypervolume matches hand-computed staircases") {
  const std::vector<RewardVector> fan{{1.0, 3.0}, {2.0, 2.0}, {3.0, 1.0}};
  CHECK(hypervolume(fan, {0.0, 0.0}) == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(hypervolume({{2.0, 3.0}}, {0.0, 0.0}) == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(hypervolume({{2.0, 3.0}}, {1.0, 1.0}) == doctest::Approx(2.0).epsilon(1e-12));
  // Points below the reference contribute nothing.
  CHECK(hypervolume({{2.0, 3.0}, {0.5, -1.0}}, {1.0, 1.0}) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(hypervolume({{0.5, 0.5}}, {1.0, 1.0}) == 0.0);
  CHECK(hypervolume({}, {0.0, 0.0}) == 0.0);

  CHECK(hypervolume({{1.0, 1.0, 1.0}}, {0.0, 0.0, 0.0}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(hypervolume({{2.0, 1.0, 1.0}, {1.0, 1.0, 2.0}}, {0.0, 0.0, 0.0}) ==
        doctest::Approx(3.0).epsilon(1e-12));

  CHECK_THROWS_AS(hypervolume({{1.0, 1.0, 1.0, 1.0}}, {0.0, 0.0, 0.0, 0.0}),
                  UnsupportedOperationError);
  CHECK_THROWS_AS(hypervolume({}, {}), UnsupportedOperationError);
}

TEST_CASE("hypervolume is monotone and filter-invariant on random sets") {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t dim = trial % 2 == 0 ? 2 : 3;
    std::vector<RewardVector> points;
    for (int i = 0; i < 8; ++i) {
      RewardVector p(dim);
      for (double& x : p) x = u(rng);
      points.push_back(std::move(p));
    }
    const RewardVector ref(dim, 0.0);
    const double base = hypervolume(points, ref);
    CHECK(hypervolume(pareto_filter(points), ref) == doctest::Approx(base).epsilon(1e-12));

    RewardVector extra(dim);
    for (double& x : extra) x = u(rng);
    std::vector<RewardVector> grown = points;
    grown.push_back(extra);
    CHECK(hypervolume(grown, ref) >= base - 1e-12);
  }
}

TEST_CASE("Monte-Carlo hypervolume approaches the exact value") {
  std::mt19937_64 rng(91);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t dim = trial % 2 == 0 ? 2 : 3;
    std::vector<RewardVector> points;
    for (int i = 0; i < 6; ++i) {
      RewardVector p(dim);
      for (double& x : p) x = u(rng);
      points.push_back(std::move(p));
    }
    const RewardVector ref(dim, 0.0);
    const double exact = hypervolume(points, ref);
    const double mc = hypervolume_monte_carlo(points, ref, 400000, 7);
    CHECK(std::abs(mc - exact) <= 0.02 * exact);
    // Same seed, same estimate.
    CHECK(hypervolume_monte_carlo(points, ref, 400000, 7) == mc);
  }
  CHECK(hypervolume_monte_carlo({{1.0, 1.0, 1.0, 2.0}}, {0.0, 0.0, 0.0, 0.0}, 1000, 1) ==
        doctest::Approx(2.0).epsilon(1e-9));
  CHECK_THROWS_AS(hypervolume_monte_carlo({{1.0}}, {0.0}, 0, 1), std::invalid_argument);
}

TEST_CASE("preference targets span the label support") {
  OfflineDataset ds;
  ds.n_unconstrained = 2;
  ds.trajectories.push_back(testsup::traj1(0, {1.0, 0.0}));
  ds.trajectories.push_back(testsup::traj1(1, {0.0, 1.0}));
  ds.trajectories[0].behavioral_preference = PreferenceVector{{0.3, 0.7}};
  ds.trajectories[1].behavioral_preference = PreferenceVector{{0.9, 0.1}};

  const TargetSet three = preference_targets_from_support(ds, 3);
  REQUIRE(three.targets.size() == 3);
  const double expect[3] = {0.3, 0.6, 0.9};
  for (int i = 0; i < 3; ++i) {
    CHECK(three.targets[static_cast<std::size_t>(i)].kind == TargetKind::preference);
    CHECK(!three.targets[static_cast<std::size_t>(i)].threshold.has_value());
    CHECK((*three.targets[static_cast<std::size_t>(i)].preference)[0] ==
          doctest::Approx(expect[i]).epsilon(1e-12));
  }
  const TargetSet one = preference_targets_from_support(ds, 1);
  CHECK((*one.targets.at(0).preference)[0] == doctest::Approx(0.6).epsilon(1e-12));

  CHECK_THROWS_AS(preference_targets_from_support(ds, 0), std::invalid_argument);
  CHECK_THROWS_AS(preference_targets_from_support(OfflineDataset{}, 2), std::invalid_argument);
  OfflineDataset unlabeled = ds;
  unlabeled.trajectories[0].behavioral_preference.reset();
  CHECK_THROWS_AS(preference_targets_from_support(unlabeled, 2), MissingLabelsError);
}

TEST_CASE("constrained targets interleave interior thresholds with preferences") {
  OfflineDataset ds;
  ds.n_unconstrained = 2;
  ds.n_constrained = 1;
  ds.trajectories.push_back(make_trajectory({testsup::tr(0, 0, 0, {1.0, 0.0}, {1.0})}));
  ds.trajectories.push_back(make_trajectory({testsup::tr(0, 1, 0, {0.0, 1.0}, {4.0})}));
  ds.trajectories[0].behavioral_preference = PreferenceVector{{0.2, 0.2, 0.6}};
  ds.trajectories[1].behavioral_preference = PreferenceVector{{0.6, 0.2, 0.2}};

  const TargetSet ts = constrained_targets_from_support(ds, 2, 2);
  REQUIRE(ts.targets.size() == 4);
  // Unconstrained label heads renormalize to [0.5,0.5] and [0.75,0.25].
  for (const Target& t : ts.targets) {
    CHECK(t.kind == TargetKind::both);
    REQUIRE(t.preference.has_value());
    REQUIRE(t.threshold.has_value());
  }
  CHECK((*ts.targets[0].threshold)[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK((*ts.targets[1].threshold)[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK((*ts.targets[2].threshold)[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK((*ts.targets[3].threshold)[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK((*ts.targets[0].preference)[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK((*ts.targets[1].preference)[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK((*ts.targets[2].preference)[0] == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(constrained_targets_from_support(ds, 0, 2), std::invalid_argument);
  CHECK_THROWS_AS(constrained_targets_from_support(ds, 2, 0), std::invalid_argument);
  OfflineDataset unconstrained = ds;
  unconstrained.n_constrained = 0;
  CHECK_THROWS_AS(constrained_targets_from_support(unconstrained, 2, 2), std::invalid_argument);
}

TEST_CASE("target evaluation is deterministic and worker-count invariant") {
  const TargetSet targets = preference_targets_from_support(chain_data(), 4);
  EvaluationConfig cfg = small_eval_config();

  const EvaluationResult a =
      evaluate_targets(chain_bundle(), testsup::chain_env(), chain_data(), targets, cfg, 3);
  REQUIRE(a.rows.size() == 4);
  for (const EvaluationRow& row : a.rows) {
    CHECK(is_normalized_preference(row.adapted_preference));
    CHECK(std::isfinite(row.utility));
    REQUIRE(row.return_vector.size() == 2);
    CHECK(std::isfinite(row.return_vector[0]));
    CHECK(row.cost_return.empty());
  }
  CHECK(a.summary.method == "pdoa");
  CHECK(a.summary.env_id == "chain");
  CHECK(a.summary.seed == 3);
  REQUIRE(a.summary.groups.size() == 1);
  CHECK(a.summary.groups[0].rows == 4);
  CHECK(a.summary.groups[0].average_utility ==
        doctest::Approx(a.summary.overall_average_utility).epsilon(1e-12));

  const EvaluationResult b =
      evaluate_targets(chain_bundle(), testsup::chain_env(), chain_data(), targets, cfg, 3);
  CHECK(summary_to_json(b.summary) == summary_to_json(a.summary));
  CHECK(rows_to_csv(b.rows) == rows_to_csv(a.rows));

  cfg.workers = 4;
  const EvaluationResult c =
      evaluate_targets(chain_bundle(), testsup::chain_env(), chain_data(), targets, cfg, 3);
  CHECK(summary_to_json(c.summary) == summary_to_json(a.summary));
  CHECK(rows_to_csv(c.rows) == rows_to_csv(a.rows));

  const EvaluationResult other =
      evaluate_targets(chain_bundle(), testsup::chain_env(), chain_data(), targets,
                       small_eval_config(), 4);
  CHECK(summary_to_json(other.summary) != summary_to_json(a.summary));
}

TEST_CASE("oracle evaluation plays the true preference") {
  const TargetSet targets = preference_targets_from_support(chain_data(), 3);
  EvaluationConfig cfg = small_eval_config();
  cfg.method = EvalMethod::oracle;
  const EvaluationResult res =
      evaluate_targets(chain_bundle(), testsup::chain_env(), chain_data(), targets, cfg, 5);
  CHECK(res.summary.method == "oracle");
  for (std::size_t i = 0; i < res.rows.size(); ++i)
    CHECK(l1_distance(res.rows[i].adapted_preference, *targets.targets[i].preference) == 0.0);
}

TEST_CASE("behavior-cloning evaluation reports the uniform placeholder preference") {
  const TargetSet targets = preference_targets_from_support(chain_data(), 2);
  EvaluationConfig cfg = small_eval_config();
  cfg.method = EvalMethod::bc_finetune;
  const EvaluationResult res =
      evaluate_targets(chain_bundle(), testsup::chain_env(), chain_data(), targets, cfg, 5);
  CHECK(res.summary.method == "bc_finetune");
  for (const EvaluationRow& row : res.rows)
    CHECK(row.adapted_preference[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("constrained evaluation groups rows by threshold") {
  BehaviorPolicySet behaviors;
  behaviors.preferences = preference_range(0.5, 1.0, 2);
  behaviors.epsilon = 0.1;
  behaviors.lambda_grid = {0.0, 0.5};
  const CmoMdpSpec mdp = make_env("cmo-grid");
  const OfflineDataset raw = generate_dataset(mdp, behaviors, 4, 31);

  RegularizedConfig lcfg;
  lcfg.grid = 3;
  lcfg.bandwidth = 0.3;
  lcfg.temperature = 0.1;
  lcfg.sweeps = 10;
  lcfg.gamma = 0.99;
  lcfg.n_states = mdp.n_states;
  lcfg.n_actions = mdp.n_actions;
  const PolicyBundle bundle = train_regularized(augment_dataset(raw), lcfg);

  const TargetSet targets = constrained_targets_from_support(raw, 2, 2);
  EvaluationConfig cfg = small_eval_config();
  cfg.adapt.steps = 20;
  cfg.episodes = 3;
  const EvaluationResult res = evaluate_targets(bundle, mdp, raw, targets, cfg, 9);
  REQUIRE(res.rows.size() == 4);
  REQUIRE(res.summary.groups.size() == 2);
  CHECK(res.summary.groups[0].rows == 2);
  CHECK(res.summary.groups[1].rows == 2);
  for (const GroupSummary& g : res.summary.groups) {
    REQUIRE(g.threshold.has_value());
    REQUIRE(g.max_cost.size() == 1);
    CHECK(g.max_cost[0] >= 0.0);
    CHECK(g.hypervolume >= 0.0);
  }
  for (const EvaluationRow& row : res.rows) REQUIRE(row.cost_return.size() == 1);

  const std::string csv = rows_to_csv(res.rows);
  CHECK(csv.rfind("target_index,kind,target_pref_0,target_pref_1,threshold_0,"
                  "adapted_pref_0,adapted_pref_1,adapted_pref_2,return_0,return_1,"
                  "cost_0,utility\n",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("target evaluation validates its inputs") {
  const TargetSet targets = preference_targets_from_support(chain_data(), 2);
  const EvaluationConfig cfg = small_eval_config();
  const CmoMdpSpec chain = testsup::chain_env();

  CHECK_THROWS_AS(
      evaluate_targets(chain_bundle(), chain, chain_data(), TargetSet{}, cfg, 1),
      std::invalid_argument);

  auto reject_cfg = [&](auto mutate) {
    EvaluationConfig bad = cfg;
    mutate(bad);
    CHECK_THROWS_AS(evaluate_targets(chain_bundle(), chain, chain_data(), targets, bad, 1),
                    std::invalid_argument);
  };
  reject_cfg([](EvaluationConfig& c) { c.episodes = 0; });
  reject_cfg([](EvaluationConfig& c) { c.demo_m = 0; });
  reject_cfg([](EvaluationConfig& c) { c.demo_k = 0; });
  reject_cfg([](EvaluationConfig& c) { c.workers = 0; });
  reject_cfg([](EvaluationConfig& c) { c.hv_ref = RewardVector{0.0, 0.0, 0.0}; });

  OfflineDataset marked = chain_data();
  marked.augmented = true;
  CHECK_THROWS_AS(evaluate_targets(chain_bundle(), chain, marked, targets, cfg, 1),
                  std::invalid_argument);

  OfflineDataset unlabeled = chain_data();
  unlabeled.trajectories[0].behavioral_preference.reset();
  CHECK_THROWS_AS(evaluate_targets(chain_bundle(), chain, unlabeled, targets, cfg, 1),
                  MissingLabelsError);

  CmoMdpSpec wrong_rewards = chain;
  wrong_rewards.n_rewards = 1;
  CHECK_THROWS_AS(evaluate_targets(chain_bundle(), wrong_rewards, chain_data(), targets, cfg, 1),
                  std::invalid_argument);

  // A two-state bundle cannot drive the 64-state grid environment.
  CHECK_THROWS_AS(
      evaluate_targets(chain_bundle(), make_env("cmo-grid"), chain_data(), targets, cfg, 1),
      std::invalid_argument);
}

TEST_CASE("summary JSON round-trips and rejects foreign versions") {
  EvaluationSummary s;
  s.method = "pdoa";
  s.env_id = "cmo-grid";
  s.seed = 12;
  s.overall_average_utility = 1.25;
  GroupSummary g0;
  g0.rows = 4;
  g0.average_utility = 1.5;
  g0.hypervolume = 2.25;
  GroupSummary g1;
  g1.threshold = CostVector{0.5};
  g1.rows = 2;
  g1.average_utility = 1.0;
  g1.hypervolume = 0.125;
  g1.max_cost = CostVector{0.75};
  s.groups = {g0, g1};

  const std::string text = summary_to_json(s);
  const EvaluationSummary back = summary_from_json(text);
  CHECK(summary_to_json(back) == text);
  CHECK(back.groups.size() == 2);
  CHECK(!back.groups[0].threshold.has_value());
  CHECK(back.groups[1].threshold == CostVector{0.5});

  const std::string path =
      (std::filesystem::temp_directory_path() / "pdoa_summary_test.json").string();
  save_summary(s, path);
  CHECK(summary_to_json(load_summary(path)) == text);
  std::remove(path.c_str());

  std::string bad = text;
  const std::size_t pos = bad.find("\"format_version\":1");
  REQUIRE(pos != std::string::npos);
  bad.replace(pos, 18, "\"format_version\":7");
  CHECK_THROWS_AS(summary_from_json(bad), std::invalid_argument);
  CHECK_THROWS_AS(load_summary("/nonexistent/summary.json"), std::runtime_error);
}

TEST_CASE("cross-seed aggregation reports means and population deviations") {
  auto summary_with = [](double overall, double group_util, double hv, double max_cost) {
    EvaluationSummary s;
    s.method = "pdoa";
    s.env_id = "cmo-grid";
    GroupSummary g;
    g.threshold = CostVector{2.0};
    g.rows = 2;
    g.average_utility = group_util;
    g.hypervolume = hv;
    g.max_cost = CostVector{max_cost};
    s.overall_average_utility = overall;
    s.groups = {g};
    return s;
  };
  const std::vector<EvaluationSummary> seeds{summary_with(1.0, 1.0, 2.0, 0.5),
                                             summary_with(2.0, 2.0, 2.0, 0.7),
                                             summary_with(3.0, 3.0, 2.0, 0.6)};
  const std::vector<ReportRow> rows = aggregate_summaries(seeds);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].method == "pdoa");
  CHECK(rows[0].group == "overall");
  CHECK(rows[0].metric == "average_utility");
  CHECK(rows[0].mean == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(rows[0].stddev == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
  CHECK(rows[0].count == 3);
  CHECK(rows[1].group == "beta=2");
  CHECK(rows[2].metric == "hypervolume");
  CHECK(rows[2].stddev == 0.0);
  CHECK(rows[3].metric == "max_cost_0");
  CHECK(rows[3].mean == doctest::Approx(0.6).epsilon(1e-12));

  const std::vector<ReportRow> single = aggregate_summaries({seeds[0]});
  for (const ReportRow& r : single) {
    CHECK(r.count == 1);
    CHECK(r.stddev == 0.0);
  }

  EvaluationSummary mismatched = seeds[0];
  mismatched.groups[0].threshold = CostVector{3.0};
  CHECK_THROWS_AS(aggregate_summaries({seeds[0], mismatched}), std::invalid_argument);
  EvaluationSummary fewer = seeds[0];
  fewer.groups.clear();
  CHECK_THROWS_AS(aggregate_summaries({seeds[0], fewer}), std::invalid_argument);
  CHECK_THROWS_AS(aggregate_summaries({}), std::invalid_argument);

  const std::string csv = report_to_csv(rows);
  CHECK(csv.rfind("method,group,metric,mean,stddev,count\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}
