#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "pdoa/learner.hpp"
#include "pdoa/types.hpp"

namespace pdoa {

// Knobs of the demonstration-fitting loop. n_unconstrained + n_constrained
// must equal the bundle's preference dimension.
struct AdaptationConfig {
  int steps = 1000;
  int samples_per_step = 64;
  double step_size = 0.05;
  double eta = 1.0;    // weight of the (|mu|_1 - 1)^2 penalty
  double delta = 0.01; // weight of the squared Bellman residual
  double alpha = 1.0;  // conservatism: upper-tail mass for constrained dims
  int n_unconstrained = 2;
  int n_constrained = 0;
};

// -delta * ||Q(s,a,w) - (r + gamma * V(s',w))||_2^2. Defined as 0 for
// return-conditioned bundles, which carry no value model.
double td_reward(const PolicyBundle& b, const Transition& t, const PreferenceVector& w,
                 double delta);

// Monte-Carlo estimate of the adaptation loss at the given samples:
//   -mean_j[ (1/M) sum_i (td + log pi(a_i|s_i, w_j)) + log prior(w_j)/M ]
//   - entropy(dist)/M + eta * (|mu|_1 - 1)^2.
// Samples are clamp-normalized for bundle queries only; the prior density is
// taken at the raw sample.
double adaptation_objective(const PolicyBundle& b, const DemonstrationSet& demos,
                            const GaussianPreferenceDistribution& dist,
                            const GaussianPreferenceDistribution& prior,
                            const AdaptationConfig& cfg,
                            const std::vector<std::vector<double>>& sampled_w);

// One evaluation of the loss and its gradient at `dist`: score-function
// estimator with a mean baseline for the expectation term, exact gradients of
// the entropy and penalty terms. Draws n_samples preferences from dist.
struct ObjectiveGradient {
  double objective = 0.0;
  std::vector<double> grad_mean;
  std::vector<double> grad_log_sigma;
};
ObjectiveGradient objective_gradient(const PolicyBundle& b, const DemonstrationSet& demos,
                                     const GaussianPreferenceDistribution& dist,
                                     const GaussianPreferenceDistribution& prior,
                                     const AdaptationConfig& cfg, int n_samples,
                                     std::mt19937_64& rng);

using TraceCallback =
    std::function<void(int step, double objective, const std::vector<double>& mean,
                       const std::vector<double>& stddev)>;

// Gradient descent on the adaptation loss from the prior's (mu, sigma), with
// sigma optimized in log space and adaptive-moment steps. Deterministic under
// seed. Throws DivergenceError after 10 consecutive non-finite objectives.
GaussianPreferenceDistribution adapt_distribution(const PolicyBundle& b,
                                                  const DemonstrationSet& demos,
                                                  const GaussianPreferenceDistribution& prior,
                                                  const AdaptationConfig& cfg, std::uint64_t seed,
                                                  const TraceCallback& trace = nullptr);

// Conservative point estimate: b_i = mu_i on unconstrained dims; on
// constrained dims the mean of the upper alpha-tail of N(mu_i, sigma_i),
// mu_i + sigma_i * phi(quantile(1 - alpha)) / alpha. alpha = 1 returns mu.
std::vector<double> conservative_estimate(const GaussianPreferenceDistribution& dist,
                                          double alpha, int n, int k);

// Full pipeline: adapt, extract the (conservative) preference, and hand back
// a rollout policy bound to the bundle at that preference.
struct PdoaResult {
  GaussianPreferenceDistribution posterior;
  PreferenceVector adapted_preference;
  std::unique_ptr<BundlePolicy> policy;
};
PdoaResult pdoa(const PolicyBundle& b, const DemonstrationSet& demos,
                const GaussianPreferenceDistribution& prior, const AdaptationConfig& cfg,
                std::uint64_t seed, const TraceCallback& trace = nullptr);

}  // namespace pdoa
