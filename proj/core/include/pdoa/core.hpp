#pragma once

// Preference handling: normalization, behavioral preference labels, the
// constrained-to-unconstrained dataset transform, demonstration selection,
// and the Gaussian preference prior.

#include <cstdint>

#include "pdoa/types.hpp"

namespace pdoa {

// Clamps negative components to zero and rescales to unit L1 mass.
// Throws DegeneratePreferenceError when nothing positive remains.
PreferenceVector normalize_preference(const std::vector<double>& raw);

// Behavioral preference of a trajectory: reward accumulations followed by
// cost slack against cost_max, rescaled to the simplex. Labels the trajectory
// and every transition in it with the result.
// cost_max must dominate the trajectory's cost return componentwise.
PreferenceVector approx_behavioral_preference(Trajectory& traj, const CostVector& cost_max);

// Folds costs into rewards with flipped sign, making a K-constraint dataset a
// purely unconstrained one of dimension N+K. Behavioral preferences are
// recomputed against the dataset-wide maximum cost return.
// Throws std::invalid_argument when there are no costs to fold.
OfflineDataset augment_dataset(const OfflineDataset& ds);

// Selects k trajectories matching the target, then samples m of their
// transitions uniformly without replacement (with replacement when fewer
// than m exist). Sampled transitions carry no behavioral preference.
//   preference: the k trajectories with labels L1-closest to the target.
//   threshold:  among trajectories with cost return within the threshold,
//               the k with highest utility.
//   both:       safe trajectories from the label group closest to the target
//               preference, then the k with highest utility.
// Trajectory ties break by index. Throws InfeasibleTargetError when no
// trajectory satisfies a threshold.
DemonstrationSet build_demo_set(const OfflineDataset& ds, const Target& target,
                                int m, int k, std::uint64_t seed);

// Fits a diagonal Gaussian to the trajectory-level behavioral preferences.
// Population standard deviation, floored at 0.05 per component.
// Throws MissingLabelsError if any trajectory is unlabeled.
GaussianPreferenceDistribution fit_preference_prior(const OfflineDataset& ds);

// Utility of a trajectory for demonstration ranking: target preference applied
// to the unconstrained reward components, uniform weights when absent.
double trajectory_utility(const Trajectory& traj, const Target& target, int n_unconstrained);

// Componentwise maximum cost return over the dataset; empty when K = 0.
CostVector max_cost_return(const OfflineDataset& ds);

// Rewrites one transition into augmented form: reward [r, -c], costs dropped.
Transition augment_transition(const Transition& tr);

// First n components of a label rescaled back onto the simplex: the
// unconstrained-objective part of a slack-form behavioral preference.
PreferenceVector unconstrained_label_part(const PreferenceVector& label, int n_unconstrained);

}  // namespace pdoa
