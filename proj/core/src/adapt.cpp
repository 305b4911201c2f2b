#include "pdoa/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>

#include "pdoa/core.hpp"
#include "pdoa/random.hpp"

namespace pdoa {

namespace {

constexpr double kHalfLog2PiE = 1.4189385332046727;  // 0.5 * ln(2*pi*e)
constexpr int kMaxBadSteps = 10;

void check_config(const AdaptationConfig& cfg, const PolicyBundle& b,
                  const GaussianPreferenceDistribution& dist,
                  const GaussianPreferenceDistribution& prior) {
  if (cfg.steps < 1) throw std::invalid_argument("adaptation: steps must be at least 1");
  if (cfg.samples_per_step < 2)
    throw std::invalid_argument("adaptation: samples_per_step must be at least 2");
  if (!(cfg.step_size > 0.0)) throw std::invalid_argument("adaptation: step_size must be positive");
  if (cfg.eta < 0.0) throw std::invalid_argument("adaptation: eta must be nonnegative");
  if (cfg.delta < 0.0) throw std::invalid_argument("adaptation: delta must be nonnegative");
  if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0))
    throw std::invalid_argument("adaptation: alpha must lie in (0, 1]");
  if (cfg.n_unconstrained < 1 || cfg.n_constrained < 0)
    throw std::invalid_argument("adaptation: bad objective counts");
  if (cfg.n_unconstrained + cfg.n_constrained != b.dim)
    throw std::invalid_argument("adaptation: objective counts do not match the bundle dimension");
  if (static_cast<int>(dist.dim()) != b.dim || static_cast<int>(prior.dim()) != b.dim)
    throw std::invalid_argument("adaptation: distribution dimension does not match the bundle");
}

void check_demos(const DemonstrationSet& demos, const PolicyBundle& b) {
  if (demos.transitions.empty()) throw std::invalid_argument("adaptation: empty demonstration set");
  for (const Transition& t : demos.transitions) {
    if (t.state < 0 || t.state >= b.n_states || t.next_state < 0 || t.next_state >= b.n_states)
      throw std::invalid_argument("adaptation: demonstration state outside the bundle");
    if (t.action < 0 || t.action >= b.n_actions)
      throw std::invalid_argument("adaptation: demonstration action outside the bundle");
    if (static_cast<int>(t.reward.size()) != b.dim)
      throw std::invalid_argument(
          "adaptation: demonstration reward dimension does not match the bundle");
  }
}

// Clamp negatives to zero and rescale onto the simplex; an all-nonpositive
// draw falls back to uniform so off-simplex samples never reach the tables.
PreferenceVector clamp_normalize(const std::vector<double>& raw) {
  std::vector<double> w(raw.size());
  double sum = 0.0;
  for (std::size_t d = 0; d < raw.size(); ++d) {
    w[d] = std::max(raw[d], 0.0);
    sum += w[d];
  }
  if (sum <= 0.0) {
    const double u = 1.0 / static_cast<double>(raw.size());
    std::fill(w.begin(), w.end(), u);
  } else {
    for (double& x : w) x /= sum;
  }
  return PreferenceVector{std::move(w)};
}

double log_density(const GaussianPreferenceDistribution& dist, const std::vector<double>& x) {
  double acc = 0.0;
  for (std::size_t d = 0; d < dist.dim(); ++d) {
    const double z = (x[d] - dist.mean[d]) / dist.stddev[d];
    acc += -0.5 * std::log(2.0 * M_PI) - std::log(dist.stddev[d]) - 0.5 * z * z;
  }
  return acc;
}

double entropy(const GaussianPreferenceDistribution& dist) {
  double acc = 0.0;
  for (std::size_t d = 0; d < dist.dim(); ++d) acc += kHalfLog2PiE + std::log(dist.stddev[d]);
  return acc;
}

// The inside-the-expectation part of the loss at one sampled preference:
// demo-averaged (td + log-likelihood) plus the prior log-density over M.
double sample_term(const PolicyBundle& b, const DemonstrationSet& demos,
                   const GaussianPreferenceDistribution& prior, const AdaptationConfig& cfg,
                   const std::vector<double>& raw_w) {
  const PreferenceVector w = clamp_normalize(raw_w);
  const double m = static_cast<double>(demos.transitions.size());
  double demo_sum = 0.0;

  if (b.kind == BundleKind::regularized) {
    const PreferenceSlice slice = slice_at(b, w);
    const int A = b.n_actions, dim = b.dim;
    std::vector<double> pi(static_cast<std::size_t>(b.n_states) * A, -1.0);
    for (const Transition& t : demos.transitions) {
      const std::size_t row = static_cast<std::size_t>(t.state) * A;
      if (pi[row] < 0.0) {
        const std::vector<double> p = slice_distribution(slice, t.state);
        std::copy(p.begin(), p.end(), pi.begin() + row);
      }
      demo_sum += std::log(pi[row + t.action]);
      if (cfg.delta > 0.0) {
        const double* q = slice.q.data() + (row + t.action) * dim;
        const double* v = slice.v.data() + static_cast<std::size_t>(t.next_state) * dim;
        double res2 = 0.0;
        for (int d = 0; d < dim; ++d) {
          const double r = t.reward[static_cast<std::size_t>(d)] + b.gamma * v[d];
          const double diff = q[d] - r;
          res2 += diff * diff;
        }
        demo_sum -= cfg.delta * res2;
      }
    }
  } else {
    const RewardVector g = b.predictor.predict(w);
    for (const Transition& t : demos.transitions)
      demo_sum += policy_logprob(b, t.state, t.action, w, g);
  }
  return demo_sum / m + log_density(prior, raw_w) / m;
}

}  // namespace

double td_reward(const PolicyBundle& b, const Transition& t, const PreferenceVector& w,
                 double delta) {
  if (b.kind == BundleKind::return_conditioned) return 0.0;
  if (delta == 0.0) return 0.0;
  const RewardVector q = q_value(b, t.state, t.action, w);
  const RewardVector v = v_value(b, t.next_state, w);
  double res2 = 0.0;
  for (std::size_t d = 0; d < q.size(); ++d) {
    const double target = t.reward[d] + b.gamma * v[d];
    const double diff = q[d] - target;
    res2 += diff * diff;
  }
  return -delta * res2;
}

double adaptation_objective(const PolicyBundle& b, const DemonstrationSet& demos,
                            const GaussianPreferenceDistribution& dist,
                            const GaussianPreferenceDistribution& prior,
                            const AdaptationConfig& cfg,
                            const std::vector<std::vector<double>>& sampled_w) {
  check_demos(demos, b);
  if (sampled_w.empty()) throw std::invalid_argument("adaptation: no sampled preferences");
  check_config(cfg, b, dist, prior);
  const double m = static_cast<double>(demos.transitions.size());

  double mean_f = 0.0;
  for (const std::vector<double>& raw : sampled_w) mean_f += sample_term(b, demos, prior, cfg, raw);
  mean_f /= static_cast<double>(sampled_w.size());

  double l1 = 0.0;
  for (double x : dist.mean) l1 += std::abs(x);
  return -mean_f - entropy(dist) / m + cfg.eta * (l1 - 1.0) * (l1 - 1.0);
}

ObjectiveGradient objective_gradient(const PolicyBundle& b, const DemonstrationSet& demos,
                                     const GaussianPreferenceDistribution& dist,
                                     const GaussianPreferenceDistribution& prior,
                                     const AdaptationConfig& cfg, int n_samples,
                                     std::mt19937_64& rng) {
  check_demos(demos, b);
  if (n_samples < 2) throw std::invalid_argument("adaptation: need at least 2 samples");
  check_config(cfg, b, dist, prior);
  const int D = b.dim;
  const double m = static_cast<double>(demos.transitions.size());

  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> z(static_cast<std::size_t>(n_samples),
                                     std::vector<double>(static_cast<std::size_t>(D)));
  std::vector<double> f(static_cast<std::size_t>(n_samples));
  std::vector<double> raw(static_cast<std::size_t>(D));
  double mean_f = 0.0;
  for (int j = 0; j < n_samples; ++j) {
    for (int d = 0; d < D; ++d) {
      z[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)] = unit(rng);
      raw[static_cast<std::size_t>(d)] =
          dist.mean[static_cast<std::size_t>(d)] +
          dist.stddev[static_cast<std::size_t>(d)] *
              z[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)];
    }
    f[static_cast<std::size_t>(j)] = sample_term(b, demos, prior, cfg, raw);
    mean_f += f[static_cast<std::size_t>(j)];
  }
  mean_f /= static_cast<double>(n_samples);

  ObjectiveGradient out;
  out.grad_mean.assign(static_cast<std::size_t>(D), 0.0);
  out.grad_log_sigma.assign(static_cast<std::size_t>(D), 0.0);

  // Score-function estimate of grad E[f] with the batch mean as baseline;
  // the loss takes -E[f], hence the sign flip below.
  for (int j = 0; j < n_samples; ++j) {
    const double fd = f[static_cast<std::size_t>(j)] - mean_f;
    for (int d = 0; d < D; ++d) {
      const double zj = z[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)];
      out.grad_mean[static_cast<std::size_t>(d)] +=
          fd * zj / dist.stddev[static_cast<std::size_t>(d)];
      out.grad_log_sigma[static_cast<std::size_t>(d)] += fd * (zj * zj - 1.0);
    }
  }
  double l1 = 0.0;
  for (double x : dist.mean) l1 += std::abs(x);
  for (int d = 0; d < D; ++d) {
    out.grad_mean[static_cast<std::size_t>(d)] =
        -out.grad_mean[static_cast<std::size_t>(d)] / static_cast<double>(n_samples);
    out.grad_log_sigma[static_cast<std::size_t>(d)] =
        -out.grad_log_sigma[static_cast<std::size_t>(d)] / static_cast<double>(n_samples) -
        1.0 / m;
    const double mu = dist.mean[static_cast<std::size_t>(d)];
    const double sign = mu > 0.0 ? 1.0 : (mu < 0.0 ? -1.0 : 0.0);
    out.grad_mean[static_cast<std::size_t>(d)] += cfg.eta * 2.0 * (l1 - 1.0) * sign;
  }
  out.objective = -mean_f - entropy(dist) / m + cfg.eta * (l1 - 1.0) * (l1 - 1.0);
  return out;
}

GaussianPreferenceDistribution adapt_distribution(const PolicyBundle& b,
                                                  const DemonstrationSet& demos,
                                                  const GaussianPreferenceDistribution& prior,
                                                  const AdaptationConfig& cfg, std::uint64_t seed,
                                                  const TraceCallback& trace) {
  check_demos(demos, b);
  check_config(cfg, b, prior, prior);
  const int D = b.dim;

  GaussianPreferenceDistribution dist = prior;
  std::vector<double> log_sigma(static_cast<std::size_t>(D));
  for (int d = 0; d < D; ++d)
    log_sigma[static_cast<std::size_t>(d)] = std::log(prior.stddev[static_cast<std::size_t>(d)]);

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  std::vector<double> m1(static_cast<std::size_t>(2 * D), 0.0);
  std::vector<double> m2(static_cast<std::size_t>(2 * D), 0.0);
  std::mt19937_64 rng = make_rng(seed);

  int bad = 0;
  int adam_t = 0;
  for (int step = 1; step <= cfg.steps; ++step) {
    const ObjectiveGradient og =
        objective_gradient(b, demos, dist, prior, cfg, cfg.samples_per_step, rng);
    bool finite = std::isfinite(og.objective);
    for (int d = 0; d < D && finite; ++d)
      finite = std::isfinite(og.grad_mean[static_cast<std::size_t>(d)]) &&
               std::isfinite(og.grad_log_sigma[static_cast<std::size_t>(d)]);
    if (!finite) {
      if (++bad >= kMaxBadSteps)
        throw DivergenceError("adaptation diverged: " + std::to_string(bad) +
                              " consecutive non-finite objectives");
      if (trace) trace(step, og.objective, dist.mean, dist.stddev);
      continue;
    }
    bad = 0;
    ++adam_t;
    const double bc1 = 1.0 - std::pow(kBeta1, adam_t);
    const double bc2 = 1.0 - std::pow(kBeta2, adam_t);
    for (int i = 0; i < 2 * D; ++i) {
      const double g = i < D ? og.grad_mean[static_cast<std::size_t>(i)]
                             : og.grad_log_sigma[static_cast<std::size_t>(i - D)];
      m1[static_cast<std::size_t>(i)] = kBeta1 * m1[static_cast<std::size_t>(i)] + (1.0 - kBeta1) * g;
      m2[static_cast<std::size_t>(i)] = kBeta2 * m2[static_cast<std::size_t>(i)] + (1.0 - kBeta2) * g * g;
      const double update = cfg.step_size * (m1[static_cast<std::size_t>(i)] / bc1) /
                            (std::sqrt(m2[static_cast<std::size_t>(i)] / bc2) + kEps);
      if (i < D)
        dist.mean[static_cast<std::size_t>(i)] -= update;
      else
        log_sigma[static_cast<std::size_t>(i - D)] -= update;
    }
    for (int d = 0; d < D; ++d)
      dist.stddev[static_cast<std::size_t>(d)] = std::exp(log_sigma[static_cast<std::size_t>(d)]);
    if (trace) trace(step, og.objective, dist.mean, dist.stddev);
  }
  return dist;
}

std::vector<double> conservative_estimate(const GaussianPreferenceDistribution& dist,
                                          double alpha, int n, int k) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("conservative_estimate: alpha must lie in (0, 1]");
  if (n < 0 || k < 0 || static_cast<std::size_t>(n + k) != dist.dim())
    throw std::invalid_argument("conservative_estimate: dimension mismatch");
  std::vector<double> b = dist.mean;
  if (alpha == 1.0) return b;
  const boost::math::normal_distribution<double> std_normal;
  const double q = boost::math::quantile(std_normal, 1.0 - alpha);
  const double tail = boost::math::pdf(std_normal, q) / alpha;
  for (int i = n; i < n + k; ++i)
    b[static_cast<std::size_t>(i)] += dist.stddev[static_cast<std::size_t>(i)] * tail;
  return b;
}

PdoaResult pdoa(const PolicyBundle& b, const DemonstrationSet& demos,
                const GaussianPreferenceDistribution& prior, const AdaptationConfig& cfg,
                std::uint64_t seed, const TraceCallback& trace) {
  PdoaResult result;
  result.posterior = adapt_distribution(b, demos, prior, cfg, seed, trace);
  const std::vector<double> point =
      cfg.n_constrained == 0
          ? result.posterior.mean
          : conservative_estimate(result.posterior, cfg.alpha, cfg.n_unconstrained,
                                  cfg.n_constrained);
  result.adapted_preference = normalize_preference(point);
  result.policy = std::make_unique<BundlePolicy>(b, result.adapted_preference);
  return result;
}

}  // namespace pdoa
