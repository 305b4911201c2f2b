#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdoa {

using RewardVector = std::vector<double>;
using CostVector = std::vector<double>;

// Thrown when a raw preference has no positive component to rescale.
struct DegeneratePreferenceError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when no trajectory in a dataset can serve a requested target.
struct InfeasibleTargetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when an operation needs behavioral preference labels that are absent.
struct MissingLabelsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when the adaptation objective stays non-finite across consecutive steps.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a query is not defined for the learner kind it was issued against.
struct UnsupportedOperationError : std::logic_error {
  using std::logic_error::logic_error;
};

// Thrown when a regression design has too few distinct preferences to solve.
struct RankDeficiencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Nonnegative weights over objectives, summing to one in L1.
struct PreferenceVector {
  std::vector<double> weights;

  std::size_t dim() const { return weights.size(); }
  double operator[](std::size_t i) const { return weights[i]; }
};

inline double l1_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

inline double l1_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("l1_distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

inline double l1_distance(const PreferenceVector& a, const PreferenceVector& b) {
  return l1_distance(a.weights, b.weights);
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double dot(const PreferenceVector& w, const std::vector<double>& v) {
  return dot(w.weights, v);
}

inline bool is_normalized_preference(const PreferenceVector& w, double tol = 1e-9) {
  if (w.weights.empty()) return false;
  double s = 0.0;
  for (double x : w.weights) {
    if (x < -tol) return false;
    s += x;
  }
  return std::abs(s - 1.0) <= tol;
}

// One environment step; behavioral_preference is filled by labeling.
struct Transition {
  int state = 0;
  int action = 0;
  int next_state = 0;
  RewardVector reward;
  CostVector cost;
  std::optional<PreferenceVector> behavioral_preference;
};

// Episode with cached reward and cost accumulations.
struct Trajectory {
  std::vector<Transition> transitions;
  RewardVector return_vector;
  CostVector cost_return;
  std::optional<PreferenceVector> behavioral_preference;
};

// Builds a trajectory and computes its return/cost sums from the transitions.
Trajectory make_trajectory(std::vector<Transition> transitions);

// Collection of trajectories sharing objective dimensions.
// If augmented is set, costs have been folded into rewards and n_constrained is 0.
struct OfflineDataset {
  std::vector<Trajectory> trajectories;
  int n_unconstrained = 0;
  int n_constrained = 0;
  bool augmented = false;
  std::string env_id;
};

// Transitions handed to adaptation; they never carry preferences or thresholds.
struct DemonstrationSet {
  std::vector<Transition> transitions;
  std::string source_target;
};

// Diagonal Gaussian over preference space.
struct GaussianPreferenceDistribution {
  std::vector<double> mean;
  std::vector<double> stddev;

  std::size_t dim() const { return mean.size(); }
};

enum class TargetKind { preference, threshold, both };

// What the demonstrator wants: a preference, a cost threshold, or both.
struct Target {
  TargetKind kind = TargetKind::preference;
  std::optional<PreferenceVector> preference;
  std::optional<CostVector> threshold;
};

}  // namespace pdoa
