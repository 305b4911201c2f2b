#include "pdoa/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "pdoa/core.hpp"
#include "pdoa/random.hpp"

namespace pdoa {

namespace {

constexpr double kRowSumTol = 1e-9;

std::size_t sa_index(const CmoMdpSpec& mdp, int s, int a) {
  return static_cast<std::size_t>(s) * mdp.n_actions + a;
}

}  // namespace

void validate_mdp(const CmoMdpSpec& mdp) {
  if (mdp.n_states <= 0 || mdp.n_actions <= 0)
    throw std::invalid_argument("validate_mdp: state and action counts must be positive");
  if (mdp.n_rewards <= 0 || mdp.n_costs < 0)
    throw std::invalid_argument("validate_mdp: need at least one reward objective");
  if (!(mdp.gamma >= 0.0 && mdp.gamma < 1.0))
    throw std::invalid_argument("validate_mdp: gamma must lie in [0, 1)");
  if (mdp.horizon < 1) throw std::invalid_argument("validate_mdp: horizon must be at least 1");
  if (mdp.initial_state < 0 || mdp.initial_state >= mdp.n_states)
    throw std::invalid_argument("validate_mdp: initial state out of range");
  const std::size_t sa = static_cast<std::size_t>(mdp.n_states) * mdp.n_actions;
  if (mdp.transition.size() != sa * mdp.n_states)
    throw std::invalid_argument("validate_mdp: transition table has wrong size");
  if (mdp.reward.size() != sa * mdp.n_rewards)
    throw std::invalid_argument("validate_mdp: reward table has wrong size");
  if (mdp.cost.size() != sa * mdp.n_costs)
    throw std::invalid_argument("validate_mdp: cost table has wrong size");
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      double row = 0.0;
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        const double p = mdp.p(s, a, s2);
        if (p < 0.0) throw std::invalid_argument("validate_mdp: negative transition probability");
        row += p;
      }
      if (std::abs(row - 1.0) > kRowSumTol)
        throw std::invalid_argument("validate_mdp: transition row does not sum to one");
      for (double c : mdp.c(s, a))
        if (c < 0.0) throw std::invalid_argument("validate_mdp: negative cost component");
    }
  }
}

namespace {

// 8x8 gridworld with two opposing goal corners. The per-step pickup rotates
// from pure objective 1 at one corner to pure objective 2 at the other, so
// optimal parking spots (and behavioral preference labels) sweep the simplex
// as the preference varies. Cells nearest the objective-1 corner are
// hazardous and cost 1 on entry.
CmoMdpSpec make_cmo_grid() {
  constexpr int kSide = 8;
  constexpr int kStates = kSide * kSide;
  constexpr int kActions = 4;  // up, down, left, right; walls bounce back
  constexpr double kSlip = 0.1;
  constexpr int kHazardLevel = 12;  // diagonal levels u >= 12 are hazardous

  auto state_of = [](int x, int y) { return y * kSide + x; };
  auto level_of = [](int x, int y) { return x + (kSide - 1 - y); };

  auto pickup = [&](int s) {
    const int x = s % kSide;
    const int y = s / kSide;
    const double l = static_cast<double>(level_of(x, y)) / (2.0 * (kSide - 1));
    const double norm = std::sqrt(l * l + (1.0 - l) * (1.0 - l));
    return std::pair<double, double>{l / norm, (1.0 - l) / norm};
  };
  auto hazardous = [&](int s) {
    const int x = s % kSide;
    const int y = s / kSide;
    return level_of(x, y) >= kHazardLevel;
  };

  CmoMdpSpec mdp;
  mdp.env_id = "cmo-grid";
  mdp.n_states = kStates;
  mdp.n_actions = kActions;
  mdp.n_rewards = 2;
  mdp.n_costs = 1;
  mdp.gamma = 0.99;
  mdp.horizon = 32;
  mdp.initial_state = state_of(0, 0);
  mdp.transition.assign(static_cast<std::size_t>(kStates) * kActions * kStates, 0.0);
  mdp.reward.assign(static_cast<std::size_t>(kStates) * kActions * 2, 0.0);
  mdp.cost.assign(static_cast<std::size_t>(kStates) * kActions * 1, 0.0);

  const int dx[kActions] = {0, 0, -1, 1};
  const int dy[kActions] = {-1, 1, 0, 0};
  for (int y = 0; y < kSide; ++y) {
    for (int x = 0; x < kSide; ++x) {
      const int s = state_of(x, y);
      for (int a = 0; a < kActions; ++a) {
        for (int exec = 0; exec < kActions; ++exec) {
          const double p = (exec == a ? 1.0 - kSlip : 0.0) + kSlip / kActions;
          const int nx = std::clamp(x + dx[exec], 0, kSide - 1);
          const int ny = std::clamp(y + dy[exec], 0, kSide - 1);
          const int s2 = state_of(nx, ny);
          mdp.transition[(static_cast<std::size_t>(s) * kActions + a) * kStates + s2] += p;
        }
        // Entry-based pickup and hazard cost, in expectation over the slip.
        double r1 = 0.0, r2 = 0.0, haz = 0.0;
        for (int s2 = 0; s2 < kStates; ++s2) {
          const double p = mdp.p(s, a, s2);
          if (p <= 0.0) continue;
          auto [g1, g2] = pickup(s2);
          r1 += p * g1;
          r2 += p * g2;
          if (hazardous(s2)) haz += p;
        }
        mdp.reward[(static_cast<std::size_t>(s) * kActions + a) * 2 + 0] = r1;
        mdp.reward[(static_cast<std::size_t>(s) * kActions + a) * 2 + 1] = r2;
        mdp.cost[static_cast<std::size_t>(s) * kActions + a] = haz;
      }
    }
  }
  return mdp;
}

}  // namespace

CmoMdpSpec make_env(const std::string& env_id) {
  if (env_id == "cmo-grid") {
    CmoMdpSpec mdp = make_cmo_grid();
    validate_mdp(mdp);
    return mdp;
  }
  throw std::invalid_argument("make_env: unknown environment id '" + env_id + "'");
}

std::string env_to_json(const CmoMdpSpec& mdp) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["env_id"] = mdp.env_id;
  j["n_states"] = mdp.n_states;
  j["n_actions"] = mdp.n_actions;
  j["n_rewards"] = mdp.n_rewards;
  j["n_costs"] = mdp.n_costs;
  j["gamma"] = mdp.gamma;
  j["horizon"] = mdp.horizon;
  j["initial_state"] = mdp.initial_state;
  j["transition"] = mdp.transition;
  j["reward"] = mdp.reward;
  j["cost"] = mdp.cost;
  return j.dump();
}

CmoMdpSpec env_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  CmoMdpSpec mdp;
  mdp.env_id = j.at("env_id").get<std::string>();
  mdp.n_states = j.at("n_states").get<int>();
  mdp.n_actions = j.at("n_actions").get<int>();
  mdp.n_rewards = j.at("n_rewards").get<int>();
  mdp.n_costs = j.at("n_costs").get<int>();
  mdp.gamma = j.at("gamma").get<double>();
  mdp.horizon = j.at("horizon").get<int>();
  mdp.initial_state = j.at("initial_state").get<int>();
  mdp.transition = j.at("transition").get<std::vector<double>>();
  mdp.reward = j.at("reward").get<std::vector<double>>();
  mdp.cost = j.at("cost").get<std::vector<double>>();
  validate_mdp(mdp);
  return mdp;
}

void save_env(const CmoMdpSpec& mdp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_env: cannot open " + path);
  out << env_to_json(mdp) << '\n';
  if (!out) throw std::runtime_error("save_env: failed writing " + path);
}

CmoMdpSpec load_env(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_env: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return env_from_json(buf.str());
}

OraclePolicy solve_scalar_dp(const CmoMdpSpec& mdp, const std::vector<double>& scalar_reward,
                             int dim, const std::vector<double>& vector_reward) {
  const int S = mdp.n_states, A = mdp.n_actions, H = mdp.horizon;
  if (scalar_reward.size() != static_cast<std::size_t>(S) * A)
    throw std::invalid_argument("solve_scalar_dp: scalar reward table has wrong size");
  if (vector_reward.size() != static_cast<std::size_t>(S) * A * dim)
    throw std::invalid_argument("solve_scalar_dp: vector reward table has wrong size");

  OraclePolicy out;
  out.horizon = H;
  out.n_states = S;
  out.n_actions = A;
  out.dim = dim;
  out.actions.assign(static_cast<std::size_t>(H) * S, 0);
  out.vector_q.assign(static_cast<std::size_t>(H) * S * A * dim, 0.0);

  std::vector<double> v(S, 0.0), v_next(S, 0.0);
  std::vector<double> w(static_cast<std::size_t>(S) * dim, 0.0);
  std::vector<double> w_next(static_cast<std::size_t>(S) * dim, 0.0);

  for (int t = H - 1; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (int a = 0; a < A; ++a) {
        double q = scalar_reward[sa_index(mdp, s, a)];
        double* qv = out.vector_q.data() +
                     ((static_cast<std::size_t>(t) * S + s) * A + a) * dim;
        for (int d = 0; d < dim; ++d)
          qv[d] = vector_reward[sa_index(mdp, s, a) * dim + d];
        for (int s2 = 0; s2 < S; ++s2) {
          const double p = mdp.p(s, a, s2);
          if (p <= 0.0) continue;
          q += mdp.gamma * p * v_next[s2];
          for (int d = 0; d < dim; ++d)
            qv[d] += mdp.gamma * p * w_next[static_cast<std::size_t>(s2) * dim + d];
        }
        if (q > best) {
          best = q;
          best_a = a;
        }
      }
      v[s] = best;
      out.actions[static_cast<std::size_t>(t) * S + s] = best_a;
      const double* qv = out.vector_q.data() +
                         ((static_cast<std::size_t>(t) * S + s) * A + best_a) * dim;
      for (int d = 0; d < dim; ++d) w[static_cast<std::size_t>(s) * dim + d] = qv[d];
    }
    std::swap(v, v_next);
    std::swap(w, w_next);
  }
  return out;
}

OraclePolicy scalarized_value_iteration(const CmoMdpSpec& mdp, const PreferenceVector& w) {
  validate_mdp(mdp);
  if (static_cast<int>(w.dim()) != mdp.n_rewards)
    throw std::invalid_argument("scalarized_value_iteration: preference dimension mismatch");
  std::vector<double> scalar(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions, 0.0);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      auto r = mdp.r(s, a);
      double v = 0.0;
      for (int d = 0; d < mdp.n_rewards; ++d) v += w[d] * r[d];
      scalar[sa_index(mdp, s, a)] = v;
    }
  return solve_scalar_dp(mdp, scalar, mdp.n_rewards, mdp.reward);
}

std::pair<RewardVector, CostVector> evaluate_policy(const CmoMdpSpec& mdp,
                                                    const OraclePolicy& policy,
                                                    double gamma_eval) {
  if (policy.horizon != mdp.horizon || policy.n_states != mdp.n_states)
    throw std::invalid_argument("evaluate_policy: policy does not match the MDP shape");
  const int S = mdp.n_states, H = mdp.horizon;
  const int dim = mdp.n_rewards + mdp.n_costs;
  std::vector<double> v(static_cast<std::size_t>(S) * dim, 0.0);
  std::vector<double> v_next(static_cast<std::size_t>(S) * dim, 0.0);
  for (int t = H - 1; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      const int a = policy.action_at(t, s);
      auto r = mdp.r(s, a);
      auto c = mdp.c(s, a);
      double* row = v.data() + static_cast<std::size_t>(s) * dim;
      for (int d = 0; d < mdp.n_rewards; ++d) row[d] = r[d];
      for (int d = 0; d < mdp.n_costs; ++d) row[mdp.n_rewards + d] = c[d];
      for (int s2 = 0; s2 < S; ++s2) {
        const double p = mdp.p(s, a, s2);
        if (p <= 0.0) continue;
        const double* next = v_next.data() + static_cast<std::size_t>(s2) * dim;
        for (int d = 0; d < dim; ++d) row[d] += gamma_eval * p * next[d];
      }
    }
    std::swap(v, v_next);
  }
  const double* row = v_next.data() + static_cast<std::size_t>(mdp.initial_state) * dim;
  RewardVector rv(row, row + mdp.n_rewards);
  CostVector cv(row + mdp.n_rewards, row + dim);
  return {std::move(rv), std::move(cv)};
}

LagrangianSolution lagrangian_safe_policy(const CmoMdpSpec& mdp, const PreferenceVector& w,
                                          const CostVector& beta,
                                          const std::vector<double>& lambda_grid) {
  validate_mdp(mdp);
  if (mdp.n_costs == 0)
    throw std::invalid_argument("lagrangian_safe_policy: MDP has no cost objectives");
  if (static_cast<int>(beta.size()) != mdp.n_costs)
    throw std::invalid_argument("lagrangian_safe_policy: threshold dimension mismatch");
  if (lambda_grid.empty())
    throw std::invalid_argument("lagrangian_safe_policy: empty multiplier grid");
  for (double l : lambda_grid)
    if (l < 0.0) throw std::invalid_argument("lagrangian_safe_policy: negative multiplier");

  LagrangianSolution best_safe;
  LagrangianSolution least_cost;
  bool have_safe = false, have_any = false;
  double least_total = std::numeric_limits<double>::infinity();

  std::vector<double> scalar(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions, 0.0);
  for (double lambda : lambda_grid) {
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a) {
        auto r = mdp.r(s, a);
        auto c = mdp.c(s, a);
        double v = 0.0;
        for (int d = 0; d < mdp.n_rewards; ++d) v += w[d] * r[d];
        for (int j = 0; j < mdp.n_costs; ++j) v -= lambda * c[j];
        scalar[sa_index(mdp, s, a)] = v;
      }
    OraclePolicy pol = solve_scalar_dp(mdp, scalar, mdp.n_rewards, mdp.reward);
    auto [rv, cv] = evaluate_policy(mdp, pol, 1.0);
    const double utility = dot(w.weights, rv);
    bool safe = true;
    double total = 0.0;
    for (int j = 0; j < mdp.n_costs; ++j) {
      if (cv[j] > beta[j] + 1e-9) safe = false;
      total += cv[j];
    }
    if (safe && (!have_safe || utility > best_safe.expected_utility)) {
      best_safe = LagrangianSolution{std::move(pol), lambda, utility, cv, true};
      have_safe = true;
      continue;
    }
    if (!have_any || total < least_total) {
      least_cost = LagrangianSolution{std::move(pol), lambda, utility, cv, false};
      least_total = total;
      have_any = true;
    }
  }
  return have_safe ? std::move(best_safe) : std::move(least_cost);
}

std::vector<PreferenceVector> default_behavior_preferences() {
  return preference_range(0.5, 1.0, 6);
}

std::vector<PreferenceVector> preference_range(double first_from, double first_to, int count) {
  if (count < 1) throw std::invalid_argument("preference_range: count must be positive");
  std::vector<PreferenceVector> prefs;
  prefs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double f = count == 1
                         ? first_from
                         : first_from + (first_to - first_from) * i / static_cast<double>(count - 1);
    prefs.push_back(normalize_preference({f, 1.0 - f}));
  }
  return prefs;
}

std::vector<double> default_lambda_grid() {
  return {0.0, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0};
}

int EpsilonGreedyPolicy::act(int t, int state, std::mt19937_64& rng) {
  if (epsilon_ > 0.0) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon_) {
      std::uniform_int_distribution<int> pick(0, n_actions_ - 1);
      return pick(rng);
    }
  }
  return base_->act(t, state, rng);
}

Trajectory rollout_trajectory(const CmoMdpSpec& mdp, RolloutPolicy& policy,
                              std::mt19937_64& rng) {
  policy.begin_episode();
  std::vector<Transition> transitions;
  transitions.reserve(static_cast<std::size_t>(mdp.horizon));
  int s = mdp.initial_state;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int t = 0; t < mdp.horizon; ++t) {
    const int a = policy.act(t, s, rng);
    if (a < 0 || a >= mdp.n_actions)
      throw std::out_of_range("rollout_trajectory: policy returned an invalid action");
    const double u = unit(rng);
    double acc = 0.0;
    int s2 = mdp.n_states - 1;
    for (int cand = 0; cand < mdp.n_states; ++cand) {
      acc += mdp.p(s, a, cand);
      if (u <= acc) {
        s2 = cand;
        break;
      }
    }
    Transition tr;
    tr.state = s;
    tr.action = a;
    tr.next_state = s2;
    auto r = mdp.r(s, a);
    auto c = mdp.c(s, a);
    tr.reward.assign(r.begin(), r.end());
    tr.cost.assign(c.begin(), c.end());
    policy.observe(tr);
    transitions.push_back(std::move(tr));
    s = s2;
  }
  return make_trajectory(std::move(transitions));
}

std::vector<std::pair<RewardVector, CostVector>> rollout(const CmoMdpSpec& mdp,
                                                         RolloutPolicy& policy, int episodes,
                                                         std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("rollout: episodes must be positive");
  std::vector<std::pair<RewardVector, CostVector>> out;
  out.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    std::mt19937_64 rng = make_rng(mix_seed(seed, static_cast<std::uint64_t>(e)));
    Trajectory traj = rollout_trajectory(mdp, policy, rng);
    out.emplace_back(std::move(traj.return_vector), std::move(traj.cost_return));
  }
  return out;
}

OfflineDataset generate_dataset(const CmoMdpSpec& mdp, const BehaviorPolicySet& behaviors,
                                int episodes_per_pref, std::uint64_t seed) {
  validate_mdp(mdp);
  if (behaviors.preferences.empty())
    throw std::invalid_argument("generate_dataset: behavior preference set is empty");
  if (behaviors.epsilon < 0.0 || behaviors.epsilon > 1.0)
    throw std::invalid_argument("generate_dataset: epsilon must lie in [0, 1]");
  if (episodes_per_pref < 1)
    throw std::invalid_argument("generate_dataset: episodes_per_pref must be positive");
  const bool constrained = !behaviors.lambda_grid.empty();
  if (constrained && mdp.n_costs == 0)
    throw std::invalid_argument("generate_dataset: multiplier grid given but MDP has no costs");

  OfflineDataset ds;
  ds.n_unconstrained = mdp.n_rewards;
  ds.n_constrained = constrained ? mdp.n_costs : 0;
  ds.augmented = false;
  ds.env_id = mdp.env_id;

  std::vector<double> scalar(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions, 0.0);
  for (std::size_t pi = 0; pi < behaviors.preferences.size(); ++pi) {
    const PreferenceVector& pref = behaviors.preferences[pi];
    if (static_cast<int>(pref.dim()) != mdp.n_rewards)
      throw std::invalid_argument("generate_dataset: behavior preference dimension mismatch");
    const std::size_t n_lambda = constrained ? behaviors.lambda_grid.size() : 1;
    for (std::size_t li = 0; li < n_lambda; ++li) {
      OraclePolicy pol;
      if (constrained) {
        const double lambda = behaviors.lambda_grid[li];
        if (lambda < 0.0)
          throw std::invalid_argument("generate_dataset: negative multiplier");
        for (int s = 0; s < mdp.n_states; ++s)
          for (int a = 0; a < mdp.n_actions; ++a) {
            auto r = mdp.r(s, a);
            auto c = mdp.c(s, a);
            double v = 0.0;
            for (int d = 0; d < mdp.n_rewards; ++d) v += pref[d] * r[d];
            for (int j = 0; j < mdp.n_costs; ++j) v -= lambda * c[j];
            scalar[sa_index(mdp, s, a)] = v;
          }
        pol = solve_scalar_dp(mdp, scalar, mdp.n_rewards, mdp.reward);
      } else {
        pol = scalarized_value_iteration(mdp, pref);
      }
      OracleRolloutPolicy base(pol);
      EpsilonGreedyPolicy noisy(base, behaviors.epsilon, mdp.n_actions);
      for (int e = 0; e < episodes_per_pref; ++e) {
        std::mt19937_64 rng = make_rng(mix_seed(seed, pi, li, static_cast<std::uint64_t>(e)));
        Trajectory traj = rollout_trajectory(mdp, noisy, rng);
        if (!constrained && mdp.n_costs > 0) {
          for (Transition& tr : traj.transitions) tr.cost.clear();
          traj.cost_return.clear();
        }
        ds.trajectories.push_back(std::move(traj));
      }
    }
  }

  const CostVector cmax = max_cost_return(ds);
  for (Trajectory& traj : ds.trajectories) approx_behavioral_preference(traj, cmax);
  return ds;
}

}  // namespace pdoa
