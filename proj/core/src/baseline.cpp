#include "pdoa/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace pdoa {

namespace {

constexpr double kGradClip = 10.0;

std::vector<double> softmax_row(const double* logits, int n) {
  const double m = *std::max_element(logits, logits + n);
  std::vector<double> p(static_cast<std::size_t>(n));
  double sum = 0.0;
  for (int a = 0; a < n; ++a) {
    p[static_cast<std::size_t>(a)] = std::exp(logits[a] - m);
    sum += p[static_cast<std::size_t>(a)];
  }
  for (double& x : p) x /= sum;
  return p;
}

}  // namespace

std::vector<double> TabularStochasticPolicy::distribution(int s) const {
  if (s < 0 || s >= n_states) throw std::out_of_range("state id out of range");
  return softmax_row(logits.data() + static_cast<std::size_t>(s) * n_actions, n_actions);
}

double TabularStochasticPolicy::logprob(int s, int a) const {
  if (a < 0 || a >= n_actions) throw std::out_of_range("action id out of range");
  return std::log(distribution(s)[static_cast<std::size_t>(a)]);
}

TabularStochasticPolicy bc_train(const OfflineDataset& ds, int n_states, int n_actions) {
  if (ds.trajectories.empty()) throw std::invalid_argument("bc_train: empty dataset");
  for (const Trajectory& traj : ds.trajectories)
    for (const Transition& tr : traj.transitions) {
      n_states = std::max({n_states, tr.state + 1, tr.next_state + 1});
      n_actions = std::max(n_actions, tr.action + 1);
    }
  if (n_states <= 0 || n_actions <= 0) throw std::invalid_argument("bc_train: empty dataset");

  std::vector<double> counts(static_cast<std::size_t>(n_states) * n_actions, 0.0);
  for (const Trajectory& traj : ds.trajectories)
    for (const Transition& tr : traj.transitions)
      counts[static_cast<std::size_t>(tr.state) * n_actions + tr.action] += 1.0;

  TabularStochasticPolicy p;
  p.n_states = n_states;
  p.n_actions = n_actions;
  p.logits.assign(counts.size(), 0.0);
  for (int s = 0; s < n_states; ++s) {
    double row = 0.0;
    for (int a = 0; a < n_actions; ++a) row += counts[static_cast<std::size_t>(s) * n_actions + a];
    for (int a = 0; a < n_actions; ++a)
      p.logits[static_cast<std::size_t>(s) * n_actions + a] =
          std::log((counts[static_cast<std::size_t>(s) * n_actions + a] + 1.0) / (row + n_actions));
  }
  return p;
}

TabularStochasticPolicy bc_finetune(const TabularStochasticPolicy& p,
                                    const DemonstrationSet& demos, double lr, int steps) {
  if (demos.transitions.empty()) throw std::invalid_argument("bc_finetune: empty demonstration set");
  if (lr < 0.0) throw std::invalid_argument("bc_finetune: negative learning rate");
  if (steps < 0) throw std::invalid_argument("bc_finetune: negative step count");
  for (const Transition& tr : demos.transitions)
    if (tr.state < 0 || tr.state >= p.n_states || tr.action < 0 || tr.action >= p.n_actions)
      throw std::out_of_range("bc_finetune: demonstration ids out of range");

  TabularStochasticPolicy out = p;
  const int A = p.n_actions;
  const double m = static_cast<double>(demos.transitions.size());

  // States touched by the demos; all other rows keep zero gradient.
  std::vector<int> demo_states;
  std::vector<char> seen(static_cast<std::size_t>(p.n_states), 0);
  for (const Transition& tr : demos.transitions)
    if (!seen[static_cast<std::size_t>(tr.state)]) {
      seen[static_cast<std::size_t>(tr.state)] = 1;
      demo_states.push_back(tr.state);
    }

  std::vector<double> grad(static_cast<std::size_t>(p.n_states) * A, 0.0);
  for (int step = 0; step < steps; ++step) {
    for (int s : demo_states)
      std::fill(grad.begin() + static_cast<std::size_t>(s) * A,
                grad.begin() + static_cast<std::size_t>(s + 1) * A, 0.0);
    for (const Transition& tr : demos.transitions) {
      const std::vector<double> pi = out.distribution(tr.state);
      double* g = grad.data() + static_cast<std::size_t>(tr.state) * A;
      for (int a = 0; a < A; ++a) g[a] -= pi[static_cast<std::size_t>(a)] / m;
      g[tr.action] += 1.0 / m;
    }
    for (int s : demo_states)
      for (int a = 0; a < A; ++a) {
        const double g = std::clamp(grad[static_cast<std::size_t>(s) * A + a], -kGradClip, kGradClip);
        out.logits[static_cast<std::size_t>(s) * A + a] += lr * g;
      }
  }
  return out;
}

int TabularRolloutPolicy::act(int, int state, std::mt19937_64& rng) {
  const std::vector<double> p = policy_->distribution(state);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    acc += p[a];
    if (u <= acc) return static_cast<int>(a);
  }
  return static_cast<int>(p.size()) - 1;
}

std::string tabular_policy_to_json(const TabularStochasticPolicy& p) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "tabular_stochastic";
  j["n_states"] = p.n_states;
  j["n_actions"] = p.n_actions;
  j["logits"] = p.logits;
  return j.dump();
}

TabularStochasticPolicy tabular_policy_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("format_version").get<int>() != 1)
    throw std::invalid_argument("tabular_policy_from_json: unsupported format version");
  if (j.at("kind").get<std::string>() != "tabular_stochastic")
    throw std::invalid_argument("tabular_policy_from_json: wrong document kind");
  TabularStochasticPolicy p;
  p.n_states = j.at("n_states").get<int>();
  p.n_actions = j.at("n_actions").get<int>();
  p.logits = j.at("logits").get<std::vector<double>>();
  if (p.n_states <= 0 || p.n_actions <= 0 ||
      p.logits.size() != static_cast<std::size_t>(p.n_states) * p.n_actions)
    throw std::invalid_argument("tabular_policy_from_json: table sizes disagree");
  for (double l : p.logits)
    if (!std::isfinite(l)) throw std::invalid_argument("tabular_policy_from_json: non-finite logits");
  return p;
}

void save_tabular_policy(const TabularStochasticPolicy& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_tabular_policy: cannot open " + path);
  out << tabular_policy_to_json(p) << '\n';
  if (!out) throw std::runtime_error("save_tabular_policy: failed writing " + path);
}

TabularStochasticPolicy load_tabular_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_tabular_policy: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return tabular_policy_from_json(buf.str());
}

}  // namespace pdoa
