#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdoa/env.hpp"
#include "pdoa/types.hpp"

namespace pdoa {

enum class BundleKind { regularized, return_conditioned };

// Training knobs for the behavior-regularized lattice learner. n_states and
// n_actions may be 0 to infer bounds from the dataset.
struct RegularizedConfig {
  int grid = 11;             // lattice nodes per preference edge
  double bandwidth = 0.15;   // L1 kernel bandwidth over preference labels
  double temperature = 0.1;  // regularized-policy temperature
  int sweeps = 200;          // fitted expected-SARSA sweeps
  double gamma = 0.99;
  int n_states = 0;
  int n_actions = 0;
};

// Training knobs for the return-conditioned learner.
struct ReturnConditionedConfig {
  double bandwidth_g = 1.0;        // L2 kernel bandwidth over return-to-go
  double bandwidth_w = 0.15;       // L1 kernel bandwidth over preferences
  double smoothing = 1e-4;         // pseudo-count toward uniform
  double filter_tolerance = 0.05;  // near-undominated filter slack
  double gamma = 0.99;
  int n_states = 0;
  int n_actions = 0;
};

// Per-node tabular models on a regular simplex grid of preferences.
// behavior_policy[(k*S + s)*A + a]; q[((k*S + s)*A + a)*D + d]; v[(k*S + s)*D + d].
struct PreferenceLattice {
  int grid = 0;
  double bandwidth = 0.0;
  double temperature = 0.0;
  int sweeps = 0;
  std::vector<PreferenceVector> nodes;
  std::vector<double> behavior_policy;
  std::vector<double> q;
  std::vector<double> v;
};

// Linear map from preference to predicted vector return, no intercept
// (preferences live on the simplex, so affine maps are already covered).
struct ReturnPredictor {
  int dim = 0;                // preference dimension
  int out_dim = 0;            // return dimension
  std::vector<double> coef;   // [out][dim] row-major

  RewardVector predict(const PreferenceVector& w) const;
};

// Trained preference-conditioned policy with the evaluators adaptation needs:
// log pi(a|s,w), vector Q(s,a,w), vector V(s,w). Exactly the fields of its
// kind are populated. rc_index groups tuple ids by state and is rebuilt on
// load rather than serialized.
struct PolicyBundle {
  BundleKind kind = BundleKind::regularized;
  std::string env_id;
  double gamma = 0.99;
  int n_states = 0;
  int n_actions = 0;
  int dim = 0;

  PreferenceLattice lattice;

  double bandwidth_g = 0.0;
  double bandwidth_w = 0.0;
  double smoothing = 0.0;
  std::vector<int> rc_state;
  std::vector<int> rc_action;
  std::vector<double> rc_g;     // [i][dim], undiscounted return-to-go
  std::vector<double> rc_pref;  // [i][dim]
  ReturnPredictor predictor;
  std::vector<std::vector<int>> rc_index;
};

// Kernel-weighted behavior cloning plus fitted expected-SARSA at every
// lattice node; the rollout policy is pi(a|s) proportional to
// behavior(a|s) * exp(w'Q(s,a)/temperature). Supports 2 or 3 objectives.
PolicyBundle train_regularized(const OfflineDataset& ds, const RegularizedConfig& cfg);

// Kernel-weighted conditional action frequencies over (state, return-to-go,
// preference) tuples plus a linear return predictor for initial targets.
PolicyBundle train_return_conditioned(const OfflineDataset& ds,
                                      const ReturnConditionedConfig& cfg);

// Least-squares fit of trajectory return on behavioral preference, restricted
// to trajectories that no other trajectory dominates after shrinking the
// dominator by `tolerance`. Throws RankDeficiencyError when fewer than two
// distinct preferences survive the filter.
ReturnPredictor fit_return_predictor(const OfflineDataset& ds, double tolerance = 0.05);

// Full action distribution at (s, w). Probabilities are floored at 1e-6 and
// renormalized, so logs are always finite. For the return-conditioned kind,
// g defaults to the predictor's output at w.
std::vector<double> policy_distribution(const PolicyBundle& b, int s, const PreferenceVector& w,
                                        const std::optional<RewardVector>& g = std::nullopt);

// log pi(a|s,w[,g]); always finite.
double policy_logprob(const PolicyBundle& b, int s, int a, const PreferenceVector& w,
                      const std::optional<RewardVector>& g = std::nullopt);

// Interpolated vector value tables. Regularized kind only; the
// return-conditioned learner has no value model.
RewardVector q_value(const PolicyBundle& b, int s, int a, const PreferenceVector& w);
RewardVector v_value(const PolicyBundle& b, int s, const PreferenceVector& w);

// Interpolated per-state tables at one preference, for repeated queries at a
// fixed w (adaptation inner loops, rollout policies). Regularized kind only.
struct PreferenceSlice {
  int n_states = 0;
  int n_actions = 0;
  int dim = 0;
  double temperature = 0.0;
  std::vector<double> preference;    // the query preference the slice was built at
  std::vector<double> log_behavior;  // [s][a]
  std::vector<double> q;             // [s][a][d]
  std::vector<double> v;             // [s][d]
};
PreferenceSlice slice_at(const PolicyBundle& b, const PreferenceVector& w);

// Action distribution from slice tables; identical to policy_distribution at
// the slice preference.
std::vector<double> slice_distribution(const PreferenceSlice& slice, int s);

// Bundle as a rollout policy at a fixed preference. The return-conditioned
// kind starts each episode at the predicted return and tracks g <- g - r.
class BundlePolicy : public RolloutPolicy {
 public:
  BundlePolicy(const PolicyBundle& bundle, PreferenceVector preference);
  void begin_episode() override;
  int act(int t, int state, std::mt19937_64& rng) override;
  void observe(const Transition& tr) override;

 private:
  const PolicyBundle* bundle_;
  PreferenceVector pref_;
  PreferenceSlice slice_;
  std::vector<double> pi_;  // [s][a], regularized kind
  RewardVector g_;
};

// Single-document JSON with a format_version field; tables row-major.
std::string bundle_to_json(const PolicyBundle& b);
PolicyBundle bundle_from_json(const std::string& text);
void save_bundle(const PolicyBundle& b, const std::string& path);
PolicyBundle load_bundle(const std::string& path);

}  // namespace pdoa
