#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdoa/core.hpp"
#include "pdoa/env.hpp"
#include "pdoa/learner.hpp"
#include "pdoa/types.hpp"
#include "support.hpp"

using namespace pdoa;

namespace {

const OfflineDataset& chain_data() {
  static const OfflineDataset ds = [] {
    BehaviorPolicySet behaviors;
    behaviors.preferences = preference_range(0.0, 1.0, 6);
    behaviors.epsilon = 0.2;
    return generate_dataset(testsup::chain_env(), behaviors, 30, 41);
  }();
  return ds;
}

RegularizedConfig chain_config() {
  RegularizedConfig cfg;
  cfg.grid = 11;
  cfg.bandwidth = 0.15;
  cfg.temperature = 0.1;
  cfg.sweeps = 50;
  cfg.gamma = 0.9;
  return cfg;
}

const PolicyBundle& chain_bundle() {
  static const PolicyBundle b = train_regularized(chain_data(), chain_config());
  return b;
}

// Expert collection on the grid environment, shared by the slow cases.
const OfflineDataset& grid_data() {
  static const OfflineDataset ds = [] {
    BehaviorPolicySet behaviors;
    behaviors.preferences = default_behavior_preferences();
    behaviors.epsilon = 0.0;
    return generate_dataset(make_env("cmo-grid"), behaviors, 40, 71);
  }();
  return ds;
}

int node_index(const PolicyBundle& b, const PreferenceVector& w) {
  for (std::size_t k = 0; k < b.lattice.nodes.size(); ++k)
    if (l1_distance(b.lattice.nodes[k], w) < 1e-12) return static_cast<int>(k);
  REQUIRE(false);
  return -1;
}

// The regularized-policy recomputation the value tables are defined against:
// pi(a|s) proportional to behavior * exp(w'Q/tau), floored at 1e-6.
std::vector<double> reference_policy(const std::vector<double>& behavior_row,
                                     const std::vector<double>& q_row, int n_actions, int dim,
                                     const PreferenceVector& w, double temperature) {
  std::vector<double> logits(static_cast<std::size_t>(n_actions));
  for (int a = 0; a < n_actions; ++a) {
    double u = 0.0;
    if (std::isfinite(temperature)) {
      for (int d = 0; d < dim; ++d) u += w[d] * q_row[static_cast<std::size_t>(a) * dim + d];
      u /= temperature;
    }
    logits[static_cast<std::size_t>(a)] = std::log(behavior_row[static_cast<std::size_t>(a)]) + u;
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(static_cast<std::size_t>(n_actions));
  double sum = 0.0;
  for (int a = 0; a < n_actions; ++a) {
    p[static_cast<std::size_t>(a)] = std::exp(logits[static_cast<std::size_t>(a)] - m);
    sum += p[static_cast<std::size_t>(a)];
  }
  for (double& x : p) x /= sum;
  sum = 0.0;
  for (double& x : p) {
    x = std::max(x, 1e-6);
    sum += x;
  }
  for (double& x : p) x /= sum;
  return p;
}

}  // namespace

TEST_CASE("infinite temperature reproduces the behavior policy") {
  RegularizedConfig cfg = chain_config();
  cfg.temperature = std::numeric_limits<double>::infinity();
  const PolicyBundle b = train_regularized(chain_data(), cfg);
  const PreferenceVector w{{0.8, 0.2}};
  const int k = node_index(b, w);
  for (int s = 0; s < b.n_states; ++s) {
    const std::vector<double> p = policy_distribution(b, s, w);
    for (int a = 0; a < b.n_actions; ++a) {
      const double bp =
          b.lattice
              .behavior_policy[(static_cast<std::size_t>(k) * b.n_states + s) * b.n_actions + a];
      CHECK(p[static_cast<std::size_t>(a)] == doctest::Approx(bp).epsilon(1e-9));
    }
  }
}

TEST_CASE("bandit expert data yields the expert fixed point") {
  BehaviorPolicySet behaviors;
  behaviors.preferences = {PreferenceVector{{1.0, 0.0}}};
  behaviors.epsilon = 0.0;
  const OfflineDataset ds = generate_dataset(testsup::bandit_env(), behaviors, 20, 5);

  RegularizedConfig cfg = chain_config();
  cfg.gamma = 0.0;
  cfg.sweeps = 10;
  // Explicit bounds: the expert data never touches action 1.
  cfg.n_states = 1;
  cfg.n_actions = 2;
  const PolicyBundle b = train_regularized(ds, cfg);

  const PreferenceVector w{{1.0, 0.0}};
  CHECK(policy_distribution(b, 0, w)[0] > 0.99);
  const RewardVector q0 = q_value(b, 0, 0, w);
  CHECK(q0[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(q0[1] == doctest::Approx(0.0).epsilon(1e-9));
  // The unseen action keeps its zero-initialized value.
  CHECK(q_value(b, 0, 1, w) == RewardVector{0.0, 0.0});
}

TEST_CASE("node values track the DP oracle on the grid environment") {
  RegularizedConfig cfg;
  cfg.grid = 11;
  cfg.bandwidth = 0.15;
  cfg.temperature = 0.1;
  cfg.sweeps = 200;
  cfg.gamma = 0.99;
  cfg.n_states = 64;
  cfg.n_actions = 4;
  const PolicyBundle b = train_regularized(grid_data(), cfg);

  // After n synchronous sweeps from zero the tables hold an n-step value, so
  // the oracle comparison runs DP at the same horizon.
  CmoMdpSpec mdp = make_env("cmo-grid");
  mdp.horizon = cfg.sweeps;
  for (const PreferenceVector& w : default_behavior_preferences()) {
    const OraclePolicy oracle = scalarized_value_iteration(mdp, w);
    const auto q = oracle.q(0, mdp.initial_state, oracle.action_at(0, mdp.initial_state));
    const double dp = dot(w, std::vector<double>(q.begin(), q.end()));
    const double fitted = dot(w, v_value(b, mdp.initial_state, w));
    CHECK(fitted == doctest::Approx(dp).epsilon(0.10));
  }
}

TEST_CASE("value tables are the policy average of the action values") {
  const PolicyBundle& b = chain_bundle();
  const int S = b.n_states, A = b.n_actions, D = b.dim;
  for (std::size_t k = 0; k < b.lattice.nodes.size(); ++k) {
    for (int s = 0; s < S; ++s) {
      std::vector<double> bp_row(static_cast<std::size_t>(A));
      std::vector<double> q_row(static_cast<std::size_t>(A) * D);
      for (int a = 0; a < A; ++a) {
        bp_row[static_cast<std::size_t>(a)] =
            b.lattice.behavior_policy[(k * S + s) * A + a];
        for (int d = 0; d < D; ++d)
          q_row[static_cast<std::size_t>(a) * D + d] = b.lattice.q[((k * S + s) * A + a) * D + d];
      }
      const std::vector<double> pi = reference_policy(bp_row, q_row, A, D, b.lattice.nodes[k],
                                                      b.lattice.temperature);
      for (int d = 0; d < D; ++d) {
        double acc = 0.0;
        for (int a = 0; a < A; ++a)
          acc += pi[static_cast<std::size_t>(a)] * q_row[static_cast<std::size_t>(a) * D + d];
        CHECK(b.lattice.v[(k * S + s) * D + d] == doctest::Approx(acc).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("distributions are proper and logs finite everywhere") {
  const PolicyBundle& b = chain_bundle();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> pick_state(0, b.n_states - 1);
  for (int trial = 0; trial < 100; ++trial) {
    const double f = u(rng);
    const PreferenceVector w{{f, 1.0 - f}};
    const int s = pick_state(rng);
    const std::vector<double> p = policy_distribution(b, s, w);
    double sum = 0.0;
    for (int a = 0; a < b.n_actions; ++a) {
      CHECK(p[static_cast<std::size_t>(a)] >= 0.0);
      sum += p[static_cast<std::size_t>(a)];
      const double lp = policy_logprob(b, s, a, w);
      CHECK(std::isfinite(lp));
      CHECK(lp == doctest::Approx(std::log(p[static_cast<std::size_t>(a)])).epsilon(1e-12));
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("interpolation is exact at nodes and averages constants") {
  // A two-node lattice lets the mixing weights be read off directly.
  OfflineDataset tiny;
  tiny.n_unconstrained = 2;
  tiny.trajectories.push_back(
      make_trajectory({testsup::tr(0, 0, 1, {1.0, 0.0}), testsup::tr(1, 1, 0, {0.0, 1.0})}));
  tiny.trajectories.push_back(
      make_trajectory({testsup::tr(0, 1, 0, {0.3, 0.7}), testsup::tr(1, 0, 1, {0.6, 0.4})}));
  testsup::label_all(tiny);

  RegularizedConfig cfg = chain_config();
  cfg.grid = 2;
  cfg.sweeps = 5;
  PolicyBundle b = train_regularized(tiny, cfg);
  REQUIRE(b.lattice.nodes.size() == 2);

  // Same tables at both nodes: any query reduces to the node value.
  for (std::size_t k = 1; k < 2; ++k) {
    std::copy_n(b.lattice.behavior_policy.begin(), b.n_states * b.n_actions,
                b.lattice.behavior_policy.begin() + k * b.n_states * b.n_actions);
    std::copy_n(b.lattice.q.begin(), b.n_states * b.n_actions * b.dim,
                b.lattice.q.begin() + k * b.n_states * b.n_actions * b.dim);
    std::copy_n(b.lattice.v.begin(), b.n_states * b.dim,
                b.lattice.v.begin() + k * b.n_states * b.dim);
  }
  const PreferenceVector node0 = b.lattice.nodes[0];
  const PreferenceVector mid{{0.37, 0.63}};
  for (int s = 0; s < b.n_states; ++s) {
    CHECK(l1_distance(v_value(b, s, mid), v_value(b, s, node0)) < 1e-12);
    const auto pm = policy_distribution(b, s, mid);
    const auto p0 = policy_distribution(b, s, node0);
    for (int a = 0; a < b.n_actions; ++a) {
      CHECK(pm[static_cast<std::size_t>(a)] ==
            doctest::Approx(p0[static_cast<std::size_t>(a)]).epsilon(1e-12));
      CHECK(l1_distance(q_value(b, s, a, mid), q_value(b, s, a, node0)) < 1e-12);
    }
  }

  // Opposing constant tables average at the midpoint.
  for (int s = 0; s < b.n_states; ++s)
    for (int a = 0; a < b.n_actions; ++a)
      for (int d = 0; d < 2; ++d) {
        b.lattice.q[((0 * static_cast<std::size_t>(b.n_states) + s) * b.n_actions + a) * 2 + d] =
            d == 0 ? 0.0 : 1.0;
        b.lattice.q[((1 * static_cast<std::size_t>(b.n_states) + s) * b.n_actions + a) * 2 + d] =
            d == 0 ? 1.0 : 0.0;
      }
  const RewardVector qmid = q_value(b, 0, 0, PreferenceVector{{0.5, 0.5}});
  CHECK(qmid[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(qmid[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("raising the temperature walks the policy toward the behavior policy") {
  const PreferenceVector w{{0.6, 0.4}};
  PolicyBundle warm = chain_bundle();
  warm.lattice.temperature = std::numeric_limits<double>::infinity();
  const std::vector<double> behavior = policy_distribution(warm, 0, w);

  double prev_tv = 1e300;
  for (double tau : {0.02, 0.1, 0.5, 2.0}) {
    PolicyBundle b = chain_bundle();
    b.lattice.temperature = tau;
    const std::vector<double> p = policy_distribution(b, 0, w);
    double tv = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) tv += std::abs(p[a] - behavior[a]);
    tv *= 0.5;
    CHECK(tv <= prev_tv + 1e-12);
    prev_tv = tv;
  }
}

TEST_CASE("value queries reject the return-conditioned kind") {
  OfflineDataset ds;
  ds.n_unconstrained = 2;
  ds.trajectories.push_back(testsup::traj1(0, {1.0, 0.0}));
  ds.trajectories.push_back(testsup::traj1(0, {0.0, 1.0}));
  testsup::label_all(ds);
  ReturnConditionedConfig cfg;
  const PolicyBundle b = train_return_conditioned(ds, cfg);
  CHECK_THROWS_AS(q_value(b, 0, 0, PreferenceVector{{1.0, 0.0}}), UnsupportedOperationError);
  CHECK_THROWS_AS(v_value(b, 0, PreferenceVector{{1.0, 0.0}}), UnsupportedOperationError);
  CHECK_THROWS_AS(slice_at(b, PreferenceVector{{1.0, 0.0}}), UnsupportedOperationError);
}

static OfflineDataset two_tuple_bandit() {
  OfflineDataset ds;
  ds.n_unconstrained = 2;
  ds.env_id = "bandit";
  ds.trajectories.push_back(make_trajectory({testsup::tr(0, 0, 0, {1.0, 0.0})}));
  ds.trajectories.push_back(make_trajectory({testsup::tr(0, 1, 0, {0.0, 1.0})}));
  testsup::label_all(ds);
  return ds;
}

TEST_CASE("return-conditioned queries concentrate and smooth as specified") {
  ReturnConditionedConfig cfg;
  cfg.bandwidth_g = 0.05;
  cfg.bandwidth_w = 0.05;
  cfg.smoothing = 1e-9;
  cfg.n_states = 2;
  const PolicyBundle b = train_return_conditioned(two_tuple_bandit(), cfg);

  // Exact match of a unique stored tuple.
  const PreferenceVector w0{{1.0, 0.0}};
  CHECK(policy_distribution(b, 0, w0, RewardVector{1.0, 0.0})[0] > 0.99);
  // Unseen state falls back to uniform.
  const std::vector<double> u = policy_distribution(b, 1, w0, RewardVector{1.0, 0.0});
  CHECK(u[0] == doctest::Approx(0.5).epsilon(1e-12));
  // Defaulted return-to-go comes from the predictor at w.
  const std::vector<double> defaulted = policy_distribution(b, 0, w0);
  const std::vector<double> explicit_g = policy_distribution(b, 0, w0, b.predictor.predict(w0));
  CHECK(defaulted[0] == doctest::Approx(explicit_g[0]).epsilon(1e-12));
  CHECK(defaulted[0] > 0.99);
}

TEST_CASE("duplicate tuples with opposite actions split evenly") {
  OfflineDataset ds;
  ds.n_unconstrained = 2;
  ds.trajectories.push_back(make_trajectory({testsup::tr(0, 0, 0, {1.0, 1.0})}));
  ds.trajectories.push_back(make_trajectory({testsup::tr(0, 1, 0, {1.0, 1.0})}));
  // Distinct labels elsewhere keep the return predictor full-rank without
  // touching the state-0 tuples under test.
  ds.trajectories.push_back(make_trajectory({testsup::tr(1, 0, 1, {2.0, 0.0})}));
  ds.trajectories.push_back(make_trajectory({testsup::tr(1, 0, 1, {0.0, 2.0})}));
  testsup::label_all(ds);
  ReturnConditionedConfig cfg;
  const PolicyBundle b = train_return_conditioned(ds, cfg);
  const std::vector<double> p =
      policy_distribution(b, 0, PreferenceVector{{0.5, 0.5}}, RewardVector{1.0, 1.0});
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("return predictor recovers an exactly linear map") {
  OfflineDataset ds;
  ds.n_unconstrained = 2;
  // Returns follow A*w with rows (2,1) and (0,3).
  ds.trajectories.push_back(testsup::traj1(0, {2.0, 0.0}));
  ds.trajectories.push_back(testsup::traj1(1, {1.0, 3.0}));
  ds.trajectories.push_back(testsup::traj1(2, {1.5, 1.5}));
  ds.trajectories[0].behavioral_preference = PreferenceVector{{1.0, 0.0}};
  ds.trajectories[1].behavioral_preference = PreferenceVector{{0.0, 1.0}};
  ds.trajectories[2].behavioral_preference = PreferenceVector{{0.5, 0.5}};

  const ReturnPredictor pred = fit_return_predictor(ds, 0.05);
  const RewardVector at = pred.predict(PreferenceVector{{0.2, 0.8}});
  CHECK(at[0] == doctest::Approx(1.2).epsilon(1e-7));
  CHECK(at[1] == doctest::Approx(2.4).epsilon(1e-7));

  // A dominated outlier is excluded, leaving the fit unchanged.
  OfflineDataset noisy = ds;
  noisy.trajectories.push_back(testsup::traj1(3, {0.1, 0.1}));
  noisy.trajectories[3].behavioral_preference = PreferenceVector{{0.7, 0.3}};
  const ReturnPredictor pred2 = fit_return_predictor(noisy, 0.05);
  for (std::size_t i = 0; i < pred.coef.size(); ++i)
    CHECK(pred2.coef[i] == doctest::Approx(pred.coef[i]).epsilon(1e-7));

  // One distinct preference cannot identify a map.
  OfflineDataset flat;
  flat.n_unconstrained = 2;
  flat.trajectories.push_back(testsup::traj1(0, {1.0, 1.0}));
  flat.trajectories.push_back(testsup::traj1(1, {1.0, 1.0}));
  flat.trajectories[0].behavioral_preference = PreferenceVector{{0.5, 0.5}};
  flat.trajectories[1].behavioral_preference = PreferenceVector{{0.5, 0.5}};
  CHECK_THROWS_AS(fit_return_predictor(flat, 0.05), RankDeficiencyError);
}

TEST_CASE("predicted returns track oracle returns on the grid environment") {
  const ReturnPredictor pred = fit_return_predictor(grid_data(), 0.05);
  const CmoMdpSpec mdp = make_env("cmo-grid");
  for (const PreferenceVector& w : default_behavior_preferences()) {
    const auto [oracle, cost] =
        evaluate_policy(mdp, scalarized_value_iteration(mdp, w), 1.0);
    const RewardVector predicted = pred.predict(w);
    double err = 0.0, mag = 0.0;
    for (int d = 0; d < 2; ++d) {
      err += std::abs(predicted[static_cast<std::size_t>(d)] - oracle[static_cast<std::size_t>(d)]);
      mag += std::abs(oracle[static_cast<std::size_t>(d)]);
    }
    // The achievable-return surface is piecewise linear in the preference;
    // a single linear fit tracks it only coarsely.
    CHECK(err / mag < 0.25);
  }
}

TEST_CASE("slices agree with direct queries and drive rollouts") {
  const PolicyBundle& b = chain_bundle();
  const PreferenceVector w{{0.8, 0.2}};
  const PreferenceSlice slice = slice_at(b, w);
  for (int s = 0; s < b.n_states; ++s) {
    const std::vector<double> direct = policy_distribution(b, s, w);
    const std::vector<double> sliced = slice_distribution(slice, s);
    for (int a = 0; a < b.n_actions; ++a)
      CHECK(sliced[static_cast<std::size_t>(a)] ==
            doctest::Approx(direct[static_cast<std::size_t>(a)]).epsilon(1e-12));
  }

  const CmoMdpSpec mdp = testsup::chain_env();
  BehaviorPolicySet expert;
  expert.preferences = {w};
  expert.epsilon = 0.0;
  const OfflineDataset ds = generate_dataset(mdp, expert, 50, 19);
  RegularizedConfig cfg = chain_config();
  const PolicyBundle focused = train_regularized(ds, cfg);

  BundlePolicy play(focused, w);
  const auto eps = rollout(mdp, play, 500, 99);
  double mean = 0.0;
  for (const auto& [ret, cost] : eps) mean += dot(w, ret);
  mean /= static_cast<double>(eps.size());
  const auto [oracle, oc] = evaluate_policy(mdp, scalarized_value_iteration(mdp, w), 1.0);
  CHECK(mean == doctest::Approx(dot(w, oracle)).epsilon(0.05));
}

TEST_CASE("return-conditioned rollout replays the matching trajectory") {
  ReturnConditionedConfig cfg;
  cfg.bandwidth_g = 0.05;
  cfg.bandwidth_w = 0.05;
  cfg.smoothing = 1e-9;
  const PolicyBundle b = train_return_conditioned(two_tuple_bandit(), cfg);
  BundlePolicy play(b, PreferenceVector{{1.0, 0.0}});
  const auto eps = rollout(testsup::bandit_env(), play, 20, 3);
  for (const auto& [ret, cost] : eps) {
    CHECK(ret[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ret[1] == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("bundle JSON round-trip is byte exact and preserves evaluators") {
  const PolicyBundle& b = chain_bundle();
  const std::string text = bundle_to_json(b);
  const PolicyBundle back = bundle_from_json(text);
  CHECK(bundle_to_json(back) == text);

  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double f = u(rng);
    const PreferenceVector w{{f, 1.0 - f}};
    const int s = static_cast<int>(rng() % static_cast<unsigned>(b.n_states));
    const int a = static_cast<int>(rng() % static_cast<unsigned>(b.n_actions));
    CHECK(policy_logprob(back, s, a, w) == policy_logprob(b, s, a, w));
    CHECK(q_value(back, s, a, w) == q_value(b, s, a, w));
    CHECK(v_value(back, s, w) == v_value(b, s, w));
  }

  const std::string path =
      (std::filesystem::temp_directory_path() / "pdoa_bundle_test.json").string();
  save_bundle(b, path);
  const PolicyBundle loaded = load_bundle(path);
  CHECK(bundle_to_json(loaded) == text);
  std::remove(path.c_str());
}

TEST_CASE("infinite temperature survives serialization") {
  RegularizedConfig cfg = chain_config();
  cfg.temperature = std::numeric_limits<double>::infinity();
  const PolicyBundle b = train_regularized(chain_data(), cfg);
  const std::string text = bundle_to_json(b);
  CHECK(text.find("\"infinity\"") != std::string::npos);
  const PolicyBundle back = bundle_from_json(text);
  CHECK(std::isinf(back.lattice.temperature));
}

TEST_CASE("return-conditioned bundles rebuild their index on load") {
  ReturnConditionedConfig cfg;
  cfg.n_states = 2;
  const PolicyBundle b = train_return_conditioned(two_tuple_bandit(), cfg);
  const std::string text = bundle_to_json(b);
  const PolicyBundle back = bundle_from_json(text);
  CHECK(bundle_to_json(back) == text);
  CHECK(back.rc_index == b.rc_index);
  const PreferenceVector w{{1.0, 0.0}};
  CHECK(policy_distribution(back, 0, w) == policy_distribution(b, 0, w));
}

TEST_CASE("bundle deserialization rejects foreign documents") {
  CHECK_THROWS_AS(bundle_from_json("{}"), std::exception);
  CHECK_THROWS_AS(load_bundle("/nonexistent/bundle.json"), std::runtime_error);
  std::string text = bundle_to_json(chain_bundle());
  const std::size_t pos = text.find("\"format_version\":1");
  REQUIRE(pos != std::string::npos);
  std::string bad = text;
  bad.replace(pos, 18, "\"format_version\":9");
  CHECK_THROWS_AS(bundle_from_json(bad), std::invalid_argument);
}

TEST_CASE("training validates its inputs") {
  const RegularizedConfig good = chain_config();
  CHECK_THROWS_AS(train_regularized(OfflineDataset{}, good), std::invalid_argument);

  OfflineDataset unlabeled;
  unlabeled.n_unconstrained = 2;
  unlabeled.trajectories.push_back(testsup::traj1(0, {1.0, 2.0}));
  CHECK_THROWS_AS(train_regularized(unlabeled, good), MissingLabelsError);

  auto reject = [&](auto mutate) {
    RegularizedConfig cfg = good;
    mutate(cfg);
    CHECK_THROWS_AS(train_regularized(chain_data(), cfg), std::invalid_argument);
  };
  reject([](RegularizedConfig& c) { c.grid = 1; });
  reject([](RegularizedConfig& c) { c.bandwidth = 0.0; });
  reject([](RegularizedConfig& c) { c.temperature = 0.0; });
  reject([](RegularizedConfig& c) { c.gamma = 1.0; });

  ReturnConditionedConfig rc;
  CHECK_THROWS_AS(train_return_conditioned(OfflineDataset{}, rc), std::invalid_argument);
  rc.bandwidth_g = 0.0;
  CHECK_THROWS_AS(train_return_conditioned(two_tuple_bandit(), rc), std::invalid_argument);
  rc = ReturnConditionedConfig{};
  rc.smoothing = 0.0;
  CHECK_THROWS_AS(train_return_conditioned(two_tuple_bandit(), rc), std::invalid_argument);

  CHECK_THROWS_AS(fit_return_predictor(OfflineDataset{}, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(fit_return_predictor(two_tuple_bandit(), -0.1), std::invalid_argument);
}
