#include "pdoa/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "pdoa/random.hpp"

namespace pdoa {

namespace {

// Distance-based group width when restricting safe trajectories to the label
// group nearest a target preference (half the default behavior grid spacing).
constexpr double kPreferenceGroupWidth = 0.05;

void check_labeled(const OfflineDataset& ds, const char* who) {
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    if (!ds.trajectories[i].behavioral_preference.has_value()) {
      std::ostringstream msg;
      msg << who << ": trajectory " << i << " has no behavioral preference label";
      throw MissingLabelsError(msg.str());
    }
  }
}

}  // namespace

PreferenceVector unconstrained_label_part(const PreferenceVector& label, int n_unconstrained) {
  if (n_unconstrained < 1 || static_cast<std::size_t>(n_unconstrained) > label.dim())
    throw std::invalid_argument("unconstrained_label_part: bad objective count");
  std::vector<double> head(label.weights.begin(), label.weights.begin() + n_unconstrained);
  return normalize_preference(head);
}

Trajectory make_trajectory(std::vector<Transition> transitions) {
  Trajectory traj;
  traj.transitions = std::move(transitions);
  if (!traj.transitions.empty()) {
    traj.return_vector.assign(traj.transitions.front().reward.size(), 0.0);
    traj.cost_return.assign(traj.transitions.front().cost.size(), 0.0);
  }
  for (const Transition& tr : traj.transitions) {
    if (tr.reward.size() != traj.return_vector.size() || tr.cost.size() != traj.cost_return.size())
      throw std::invalid_argument("make_trajectory: transitions disagree on objective dimensions");
    for (std::size_t d = 0; d < tr.reward.size(); ++d) traj.return_vector[d] += tr.reward[d];
    for (std::size_t d = 0; d < tr.cost.size(); ++d) traj.cost_return[d] += tr.cost[d];
  }
  return traj;
}

PreferenceVector normalize_preference(const std::vector<double>& raw) {
  if (raw.empty()) throw DegeneratePreferenceError("normalize_preference: empty preference");
  std::vector<double> clamped(raw.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    clamped[i] = raw[i] > 0.0 ? raw[i] : 0.0;
    sum += clamped[i];
  }
  if (sum <= 0.0)
    throw DegeneratePreferenceError("normalize_preference: no positive component to rescale");
  for (double& x : clamped) x /= sum;
  return PreferenceVector{std::move(clamped)};
}

PreferenceVector approx_behavioral_preference(Trajectory& traj, const CostVector& cost_max) {
  if (cost_max.size() != traj.cost_return.size())
    throw std::invalid_argument("approx_behavioral_preference: cost_max dimension mismatch");
  for (std::size_t j = 0; j < cost_max.size(); ++j) {
    if (cost_max[j] + 1e-12 < traj.cost_return[j])
      throw std::invalid_argument(
          "approx_behavioral_preference: cost_max must dominate the trajectory cost return");
  }
  std::vector<double> utility(traj.return_vector);
  for (std::size_t j = 0; j < cost_max.size(); ++j)
    utility.push_back(cost_max[j] - traj.cost_return[j]);
  PreferenceVector label = normalize_preference(utility);
  traj.behavioral_preference = label;
  for (Transition& tr : traj.transitions) tr.behavioral_preference = label;
  return label;
}

CostVector max_cost_return(const OfflineDataset& ds) {
  CostVector cmax(static_cast<std::size_t>(ds.n_constrained), 0.0);
  for (const Trajectory& traj : ds.trajectories) {
    for (std::size_t j = 0; j < cmax.size(); ++j)
      cmax[j] = std::max(cmax[j], traj.cost_return[j]);
  }
  return cmax;
}

Transition augment_transition(const Transition& tr) {
  Transition out = tr;
  for (double c : tr.cost) out.reward.push_back(-c);
  out.cost.clear();
  return out;
}

OfflineDataset augment_dataset(const OfflineDataset& ds) {
  if (ds.augmented || ds.n_constrained == 0)
    throw std::invalid_argument("augment_dataset: dataset has no cost objectives to fold");
  CostVector cmax = max_cost_return(ds);
  OfflineDataset out;
  out.n_unconstrained = ds.n_unconstrained + ds.n_constrained;
  out.n_constrained = 0;
  out.augmented = true;
  out.env_id = ds.env_id;
  out.trajectories.reserve(ds.trajectories.size());
  for (const Trajectory& traj : ds.trajectories) {
    std::vector<Transition> transitions;
    transitions.reserve(traj.transitions.size());
    for (const Transition& tr : traj.transitions) transitions.push_back(augment_transition(tr));
    Trajectory aug = make_trajectory(std::move(transitions));
    // Labels keep the slack form: reward accumulations then cost headroom.
    std::vector<double> utility(traj.return_vector);
    for (std::size_t j = 0; j < cmax.size(); ++j) utility.push_back(cmax[j] - traj.cost_return[j]);
    PreferenceVector label = normalize_preference(utility);
    aug.behavioral_preference = label;
    for (Transition& tr : aug.transitions) tr.behavioral_preference = label;
    out.trajectories.push_back(std::move(aug));
  }
  return out;
}

double trajectory_utility(const Trajectory& traj, const Target& target, int n_unconstrained) {
  if (target.preference.has_value()) {
    const PreferenceVector& w = *target.preference;
    if (static_cast<int>(w.dim()) != n_unconstrained)
      throw std::invalid_argument("trajectory_utility: preference dimension mismatch");
    double u = 0.0;
    for (int d = 0; d < n_unconstrained; ++d) u += w[d] * traj.return_vector[d];
    return u;
  }
  double u = 0.0;
  for (int d = 0; d < n_unconstrained; ++d) u += traj.return_vector[d];
  return u / static_cast<double>(n_unconstrained);
}

DemonstrationSet build_demo_set(const OfflineDataset& ds, const Target& target,
                                int m, int k, std::uint64_t seed) {
  if (m <= 0 || k <= 0) throw std::invalid_argument("build_demo_set: m and k must be positive");
  if (ds.trajectories.empty()) throw std::invalid_argument("build_demo_set: empty dataset");

  std::vector<std::size_t> chosen;
  std::ostringstream source;

  if (target.kind == TargetKind::preference) {
    if (!target.preference.has_value())
      throw std::invalid_argument("build_demo_set: preference target without a preference");
    check_labeled(ds, "build_demo_set");
    std::vector<std::size_t> order(ds.trajectories.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return l1_distance(*ds.trajectories[a].behavioral_preference, *target.preference) <
             l1_distance(*ds.trajectories[b].behavioral_preference, *target.preference);
    });
    order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(k)));
    chosen = order;
    source << "preference";
  } else {
    if (!target.threshold.has_value())
      throw std::invalid_argument("build_demo_set: threshold target without a threshold");
    const CostVector& beta = *target.threshold;
    if (static_cast<int>(beta.size()) != ds.n_constrained)
      throw std::invalid_argument("build_demo_set: threshold dimension mismatch");
    std::vector<std::size_t> safe;
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
      bool ok = true;
      for (std::size_t j = 0; j < beta.size(); ++j)
        if (ds.trajectories[i].cost_return[j] > beta[j] + 1e-12) ok = false;
      if (ok) safe.push_back(i);
    }
    if (safe.empty())
      throw InfeasibleTargetError("build_demo_set: no trajectory satisfies the cost threshold");

    if (target.kind == TargetKind::both) {
      if (!target.preference.has_value())
        throw std::invalid_argument("build_demo_set: combined target without a preference");
      check_labeled(ds, "build_demo_set");
      // Keep only the safe trajectories whose unconstrained label components
      // sit in the group nearest the target preference.
      double best = std::numeric_limits<double>::infinity();
      std::vector<double> dist(safe.size());
      for (std::size_t idx = 0; idx < safe.size(); ++idx) {
        PreferenceVector head = unconstrained_label_part(
            *ds.trajectories[safe[idx]].behavioral_preference, ds.n_unconstrained);
        dist[idx] = l1_distance(head, *target.preference);
        best = std::min(best, dist[idx]);
      }
      std::vector<std::size_t> group;
      for (std::size_t idx = 0; idx < safe.size(); ++idx)
        if (dist[idx] <= best + kPreferenceGroupWidth) group.push_back(safe[idx]);
      safe = std::move(group);
    }

    std::stable_sort(safe.begin(), safe.end(), [&](std::size_t a, std::size_t b) {
      return trajectory_utility(ds.trajectories[a], target, ds.n_unconstrained) >
             trajectory_utility(ds.trajectories[b], target, ds.n_unconstrained);
    });
    safe.resize(std::min<std::size_t>(safe.size(), static_cast<std::size_t>(k)));
    chosen = safe;
    source << (target.kind == TargetKind::both ? "both" : "threshold");
  }

  std::vector<const Transition*> pool;
  for (std::size_t i : chosen)
    for (const Transition& tr : ds.trajectories[i].transitions) pool.push_back(&tr);
  if (pool.empty()) throw InfeasibleTargetError("build_demo_set: selected trajectories are empty");

  std::mt19937_64 rng = make_rng(seed);
  DemonstrationSet demos;
  demos.source_target = source.str();
  demos.transitions.reserve(static_cast<std::size_t>(m));
  if (pool.size() >= static_cast<std::size_t>(m)) {
    // Partial Fisher-Yates: the first m slots become the sample.
    for (int i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
      demos.transitions.push_back(*pool[static_cast<std::size_t>(i)]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int i = 0; i < m; ++i) demos.transitions.push_back(*pool[pick(rng)]);
  }
  for (Transition& tr : demos.transitions) tr.behavioral_preference.reset();
  return demos;
}

GaussianPreferenceDistribution fit_preference_prior(const OfflineDataset& ds) {
  if (ds.trajectories.empty())
    throw std::invalid_argument("fit_preference_prior: empty dataset");
  check_labeled(ds, "fit_preference_prior");
  const std::size_t dim = ds.trajectories.front().behavioral_preference->dim();
  std::vector<double> mean(dim, 0.0);
  for (const Trajectory& traj : ds.trajectories) {
    if (traj.behavioral_preference->dim() != dim)
      throw std::invalid_argument("fit_preference_prior: label dimension mismatch");
    for (std::size_t d = 0; d < dim; ++d) mean[d] += (*traj.behavioral_preference)[d];
  }
  const double n = static_cast<double>(ds.trajectories.size());
  for (double& x : mean) x /= n;
  std::vector<double> var(dim, 0.0);
  for (const Trajectory& traj : ds.trajectories) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = (*traj.behavioral_preference)[d] - mean[d];
      var[d] += diff * diff;
    }
  }
  std::vector<double> stddev(dim);
  for (std::size_t d = 0; d < dim; ++d) stddev[d] = std::max(std::sqrt(var[d] / n), 0.05);
  return GaussianPreferenceDistribution{std::move(mean), std::move(stddev)};
}

}  // namespace pdoa
