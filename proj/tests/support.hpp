#pragma once

// Hand-sized, exactly solvable environments and trajectory builders shared by
// the test binaries.

#include <stdexcept>
#include <utility>
#include <vector>

#include "pdoa/core.hpp"
#include "pdoa/env.hpp"
#include "pdoa/types.hpp"

namespace testsup {

// One state, two actions, one step; action a earns the unit reward e_a.
inline pdoa::CmoMdpSpec bandit_env() {
  pdoa::CmoMdpSpec m;
  m.env_id = "bandit";
  m.n_states = 1;
  m.n_actions = 2;
  m.n_rewards = 2;
  m.n_costs = 0;
  m.transition = {1.0, 1.0};
  m.reward = {1.0, 0.0, 0.0, 1.0};
  m.gamma = 0.0;
  m.horizon = 1;
  m.initial_state = 0;
  return m;
}

// Two deterministic states trading the first objective (stay at state 0)
// against the second (stay at state 1), with a mixed return action each.
inline pdoa::CmoMdpSpec chain_env() {
  pdoa::CmoMdpSpec m;
  m.env_id = "chain";
  m.n_states = 2;
  m.n_actions = 2;
  m.n_rewards = 2;
  m.n_costs = 0;
  m.transition.assign(2 * 2 * 2, 0.0);
  auto link = [&m](int s, int a, int s2) {
    m.transition[static_cast<std::size_t>((s * 2 + a) * 2 + s2)] = 1.0;
  };
  link(0, 0, 0);
  link(0, 1, 1);
  link(1, 0, 0);
  link(1, 1, 1);
  m.reward = {1.0, 0.0,   // s0, stay
              0.0, 0.2,   // s0, move
              0.5, 0.5,   // s1, move back
              0.0, 1.0};  // s1, stay
  m.gamma = 0.9;
  m.horizon = 6;
  m.initial_state = 0;
  return m;
}

// Four states where action a jumps straight to state a; two rewards and one
// cost, all functions of the action alone, so policies are action sequences.
inline pdoa::CmoMdpSpec four_state_env() {
  pdoa::CmoMdpSpec m;
  m.env_id = "four-state";
  m.n_states = 4;
  m.n_actions = 4;
  m.n_rewards = 2;
  m.n_costs = 1;
  m.transition.assign(4 * 4 * 4, 0.0);
  const double f[4] = {0.0, 0.6, 0.85, 1.0};
  const double h[4] = {1.0, 0.7, 0.4, 0.0};
  const double g[4] = {0.0, 0.2, 0.5, 1.0};
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 4; ++a) {
      m.transition[static_cast<std::size_t>((s * 4 + a) * 4 + a)] = 1.0;
      m.reward.push_back(f[a]);
      m.reward.push_back(h[a]);
      m.cost.push_back(g[a]);
    }
  m.gamma = 0.99;
  m.horizon = 4;
  m.initial_state = 0;
  return m;
}

inline pdoa::Transition tr(int s, int a, int s2, std::vector<double> r,
                           std::vector<double> c = {}) {
  pdoa::Transition t;
  t.state = s;
  t.action = a;
  t.next_state = s2;
  t.reward = std::move(r);
  t.cost = std::move(c);
  return t;
}

// Single-transition trajectory carrying the given accumulations, stamped with
// a state marker so tests can recognize where demonstrations came from.
inline pdoa::Trajectory traj1(int marker, std::vector<double> r, std::vector<double> c = {}) {
  return pdoa::make_trajectory({tr(marker, 0, marker, std::move(r), std::move(c))});
}

// Labels every trajectory (and its transitions) against the dataset-wide
// maximum cost return.
inline void label_all(pdoa::OfflineDataset& ds) {
  const pdoa::CostVector cmax = pdoa::max_cost_return(ds);
  for (auto& t : ds.trajectories) pdoa::approx_behavioral_preference(t, cmax);
}

// Outcome of one open-loop action sequence on a deterministic MDP.
struct SequenceOutcome {
  std::vector<int> actions;
  pdoa::RewardVector ret;
  pdoa::CostVector cost;
};

// Exhaustively simulates every action sequence of a deterministic MDP,
// discounting both rewards and costs at gamma_eval.
inline std::vector<SequenceOutcome> enumerate_sequences(const pdoa::CmoMdpSpec& mdp,
                                                        double gamma_eval) {
  const int H = mdp.horizon, A = mdp.n_actions;
  long total = 1;
  for (int t = 0; t < H; ++t) total *= A;
  std::vector<SequenceOutcome> out;
  out.reserve(static_cast<std::size_t>(total));
  std::vector<int> seq(static_cast<std::size_t>(H), 0);
  for (long code = 0; code < total; ++code) {
    long rest = code;
    for (int t = 0; t < H; ++t) {
      seq[static_cast<std::size_t>(t)] = static_cast<int>(rest % A);
      rest /= A;
    }
    SequenceOutcome o;
    o.actions = seq;
    o.ret.assign(static_cast<std::size_t>(mdp.n_rewards), 0.0);
    o.cost.assign(static_cast<std::size_t>(mdp.n_costs), 0.0);
    int s = mdp.initial_state;
    double disc = 1.0;
    for (int t = 0; t < H; ++t) {
      const int a = seq[static_cast<std::size_t>(t)];
      const auto r = mdp.r(s, a);
      for (int d = 0; d < mdp.n_rewards; ++d) o.ret[static_cast<std::size_t>(d)] += disc * r[d];
      const auto c = mdp.c(s, a);
      for (int j = 0; j < mdp.n_costs; ++j) o.cost[static_cast<std::size_t>(j)] += disc * c[j];
      int s2 = -1;
      for (int cand = 0; cand < mdp.n_states; ++cand)
        if (mdp.p(s, a, cand) > 0.5) {
          s2 = cand;
          break;
        }
      if (s2 < 0) throw std::logic_error("enumerate_sequences: MDP is not deterministic");
      s = s2;
      disc *= gamma_eval;
    }
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace testsup
