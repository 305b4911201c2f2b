#pragma once

// Constrained multi-objective MDPs with exact finite-horizon solvers, offline
// dataset generation from preference- and multiplier-varying behavior
// policies, and seeded rollout utilities.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pdoa/types.hpp"

namespace pdoa {

// Tabular CMO-MDP. Tables are row-major: transition[s][a][s2],
// reward[s][a][d], cost[s][a][j].
struct CmoMdpSpec {
  std::string env_id;
  int n_states = 0;
  int n_actions = 0;
  int n_rewards = 0;
  int n_costs = 0;
  std::vector<double> transition;
  std::vector<double> reward;
  std::vector<double> cost;
  double gamma = 0.99;
  int horizon = 1;
  int initial_state = 0;

  double p(int s, int a, int s2) const {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
  }
  std::span<const double> r(int s, int a) const {
    return {reward.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_rewards,
            static_cast<std::size_t>(n_rewards)};
  }
  std::span<const double> c(int s, int a) const {
    return {cost.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_costs,
            static_cast<std::size_t>(n_costs)};
  }
};

// Throws std::invalid_argument on inconsistent dimensions, unnormalized
// transition rows, negative costs, gamma outside [0, 1), or horizon < 1.
void validate_mdp(const CmoMdpSpec& mdp);

// Built-in environments; unknown ids throw std::invalid_argument.
CmoMdpSpec make_env(const std::string& env_id);

// JSON round-trip for environment specs (tables stay flattened row-major).
std::string env_to_json(const CmoMdpSpec& mdp);
CmoMdpSpec env_from_json(const std::string& text);
void save_env(const CmoMdpSpec& mdp, const std::string& path);
CmoMdpSpec load_env(const std::string& path);

// Deterministic time-indexed policy with the vector value tables of the
// greedy policy. actions[t*S + s]; vector_q[((t*S + s)*A + a)*D + d].
struct OraclePolicy {
  int horizon = 0;
  int n_states = 0;
  int n_actions = 0;
  int dim = 0;
  std::vector<int> actions;
  std::vector<double> vector_q;

  int action_at(int t, int s) const { return actions[static_cast<std::size_t>(t) * n_states + s]; }
  std::span<const double> q(int t, int s, int a) const {
    return {vector_q.data() +
                ((static_cast<std::size_t>(t) * n_states + s) * n_actions + a) * dim,
            static_cast<std::size_t>(dim)};
  }
};

// Exact finite-horizon scalarized value iteration on w applied to the reward
// components. Ties break toward the lowest action id. The returned vector Q
// re-evaluates the greedy policy per reward component.
OraclePolicy scalarized_value_iteration(const CmoMdpSpec& mdp, const PreferenceVector& w);

// Scalarized DP on an arbitrary per-step scalar reward table [s][a].
OraclePolicy solve_scalar_dp(const CmoMdpSpec& mdp, const std::vector<double>& scalar_reward,
                             int dim, const std::vector<double>& vector_reward);

// Exact expected reward and cost accumulations of a time-indexed policy from
// the initial state, at an evaluation discount (1.0 recovers plain sums).
std::pair<RewardVector, CostVector> evaluate_policy(const CmoMdpSpec& mdp,
                                                    const OraclePolicy& policy,
                                                    double gamma_eval);

struct LagrangianSolution {
  OraclePolicy policy;
  double lambda = 0.0;
  double expected_utility = 0.0;
  CostVector expected_cost;
  bool feasible = false;
};

// Sweeps the multiplier grid, solving DP on w'r - lambda * sum(c) per entry,
// and returns the highest-utility policy whose expected cost respects beta.
// When no entry is safe, returns the minimum-total-cost policy with
// feasible = false. Expectations are undiscounted.
LagrangianSolution lagrangian_safe_policy(const CmoMdpSpec& mdp, const PreferenceVector& w,
                                          const CostVector& beta,
                                          const std::vector<double>& lambda_grid);

// Behavior policies for dataset generation: preference-conditioned oracles
// with epsilon-greedy noise; lambda_grid switches on constrained collection.
struct BehaviorPolicySet {
  std::vector<PreferenceVector> preferences;
  double epsilon = 0.0;
  std::vector<double> lambda_grid;
};

// The six-point default preference grid over two reward objectives.
std::vector<PreferenceVector> default_behavior_preferences();

// Evenly spaced two-objective preferences [first, 1-first] over a range.
std::vector<PreferenceVector> preference_range(double first_from, double first_to, int count);

// Default multiplier sweep for constrained collection.
std::vector<double> default_lambda_grid();

// Stateful policy driven by a rollout; observe is called after every step.
class RolloutPolicy {
 public:
  virtual ~RolloutPolicy() = default;
  virtual void begin_episode() {}
  virtual int act(int t, int state, std::mt19937_64& rng) = 0;
  virtual void observe(const Transition& tr) { (void)tr; }
};

// Greedy play of a time-indexed oracle policy.
class OracleRolloutPolicy : public RolloutPolicy {
 public:
  explicit OracleRolloutPolicy(const OraclePolicy& policy) : policy_(&policy) {}
  int act(int t, int state, std::mt19937_64&) override { return policy_->action_at(t, state); }

 private:
  const OraclePolicy* policy_;
};

// Uniform-random action with probability epsilon, base policy otherwise.
class EpsilonGreedyPolicy : public RolloutPolicy {
 public:
  EpsilonGreedyPolicy(RolloutPolicy& base, double epsilon, int n_actions)
      : base_(&base), epsilon_(epsilon), n_actions_(n_actions) {}
  void begin_episode() override { base_->begin_episode(); }
  int act(int t, int state, std::mt19937_64& rng) override;
  void observe(const Transition& tr) override { base_->observe(tr); }

 private:
  RolloutPolicy* base_;
  double epsilon_;
  int n_actions_;
};

// Runs one episode of mdp.horizon steps.
Trajectory rollout_trajectory(const CmoMdpSpec& mdp, RolloutPolicy& policy, std::mt19937_64& rng);

// Seeded batch rollout; returns (return_vector, cost_return) per episode.
std::vector<std::pair<RewardVector, CostVector>> rollout(const CmoMdpSpec& mdp,
                                                         RolloutPolicy& policy, int episodes,
                                                         std::uint64_t seed);

// Rolls out every behavior policy (crossed with the multiplier grid when
// constrained) for episodes_per_pref episodes each and labels trajectories
// with their behavioral preferences. Unconstrained collection keeps only the
// reward objectives. Deterministic under seed.
OfflineDataset generate_dataset(const CmoMdpSpec& mdp, const BehaviorPolicySet& behaviors,
                                int episodes_per_pref, std::uint64_t seed);

}  // namespace pdoa
