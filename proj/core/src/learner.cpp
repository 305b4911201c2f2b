#include "pdoa/learner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "pdoa/core.hpp"

namespace pdoa {

namespace {

constexpr double kProbFloor = 1e-6;
constexpr double kKernelCutoff = 1e-12;
constexpr double kRidge = 1e-9;

struct Bounds {
  int n_states = 0;
  int n_actions = 0;
};

Bounds infer_bounds(const OfflineDataset& ds, int n_states, int n_actions) {
  Bounds b{n_states, n_actions};
  for (const Trajectory& traj : ds.trajectories) {
    for (const Transition& tr : traj.transitions) {
      b.n_states = std::max({b.n_states, tr.state + 1, tr.next_state + 1});
      b.n_actions = std::max(b.n_actions, tr.action + 1);
    }
  }
  if (b.n_states <= 0 || b.n_actions <= 0)
    throw std::invalid_argument("infer_bounds: empty dataset");
  return b;
}

const PreferenceVector& trajectory_label(const Trajectory& traj, std::size_t index) {
  if (!traj.behavioral_preference)
    throw MissingLabelsError("trajectory " + std::to_string(index) +
                             " has no behavioral preference label");
  return *traj.behavioral_preference;
}

int reward_dim(const OfflineDataset& ds) {
  if (ds.trajectories.empty() || ds.trajectories.front().transitions.empty())
    throw std::invalid_argument("dataset has no transitions");
  return static_cast<int>(ds.trajectories.front().transitions.front().reward.size());
}

// Triangular node enumeration for three objectives: rows by the first index.
int tri_node_id(int grid, int i, int j) { return i * grid - i * (i - 1) / 2 + j; }

std::vector<PreferenceVector> make_nodes(int grid, int dim) {
  std::vector<PreferenceVector> nodes;
  const double denom = grid - 1;
  if (dim == 2) {
    nodes.reserve(static_cast<std::size_t>(grid));
    for (int i = 0; i < grid; ++i)
      nodes.push_back(PreferenceVector{{i / denom, 1.0 - i / denom}});
  } else if (dim == 3) {
    for (int i = 0; i < grid; ++i)
      for (int j = 0; j < grid - i; ++j)
        nodes.push_back(PreferenceVector{{i / denom, j / denom, (grid - 1 - i - j) / denom}});
  } else {
    throw std::invalid_argument("preference lattice supports 2 or 3 objectives");
  }
  return nodes;
}

// Barycentric mixture of lattice nodes at a query preference, parameterized
// by the first dim-1 coordinates.
struct LatticeMix {
  int count = 0;
  int idx[3] = {0, 0, 0};
  double wgt[3] = {0.0, 0.0, 0.0};
};

LatticeMix locate(int grid, int dim, const PreferenceVector& w) {
  LatticeMix mix;
  const double denom = grid - 1;
  if (dim == 2) {
    const double x = std::clamp(w[0], 0.0, 1.0) * denom;
    const int i = std::min(static_cast<int>(x), grid - 2);
    const double f = std::clamp(x - i, 0.0, 1.0);
    mix.count = 2;
    mix.idx[0] = i;
    mix.wgt[0] = 1.0 - f;
    mix.idx[1] = i + 1;
    mix.wgt[1] = f;
    return mix;
  }
  double x = std::clamp(w[0], 0.0, 1.0) * denom;
  double y = std::clamp(w[1], 0.0, 1.0) * denom;
  if (x + y > denom) {
    const double scale = denom / (x + y);
    x *= scale;
    y *= scale;
  }
  const int i = std::min(static_cast<int>(x), grid - 2);
  // Cells with i + j > grid - 2 lie past the diagonal edge; the rescale above
  // can still floor into one by a rounding ulp, so pin j to the edge cell.
  const int j = std::min({static_cast<int>(y), grid - 2, grid - 2 - i});
  const double fx = std::clamp(x - i, 0.0, 1.0);
  const double fy = std::clamp(y - j, 0.0, 1.0);
  mix.count = 3;
  // The upper-right corner (i+1, j+1) only exists when i + j <= grid - 3; in
  // the edge cell any fx + fy overshoot past 1 is rounding noise, so the
  // query stays in the lower triangle with the overshoot clamped away.
  if (fx + fy <= 1.0 || i + j > grid - 3) {
    const double w0 = std::max(1.0 - fx - fy, 0.0);
    const double sum = w0 + fx + fy;
    mix.idx[0] = tri_node_id(grid, i, j);
    mix.wgt[0] = w0 / sum;
    mix.idx[1] = fx > 0.0 ? tri_node_id(grid, i + 1, j) : mix.idx[0];
    mix.wgt[1] = fx / sum;
    mix.idx[2] = fy > 0.0 ? tri_node_id(grid, i, j + 1) : mix.idx[0];
    mix.wgt[2] = fy / sum;
  } else {
    mix.idx[0] = tri_node_id(grid, i + 1, j + 1);
    mix.wgt[0] = fx + fy - 1.0;
    mix.idx[1] = tri_node_id(grid, i + 1, j);
    mix.wgt[1] = 1.0 - fy;
    mix.idx[2] = tri_node_id(grid, i, j + 1);
    mix.wgt[2] = 1.0 - fx;
  }
  return mix;
}

void check_regularized(const PolicyBundle& b) {
  if (b.kind != BundleKind::regularized)
    throw UnsupportedOperationError("operation requires a value-based bundle");
}

void check_state(const PolicyBundle& b, int s) {
  if (s < 0 || s >= b.n_states) throw std::out_of_range("state id out of range");
}

void check_action(const PolicyBundle& b, int a) {
  if (a < 0 || a >= b.n_actions) throw std::out_of_range("action id out of range");
}

void check_preference(const PolicyBundle& b, const PreferenceVector& w) {
  if (static_cast<int>(w.dim()) != b.dim)
    throw std::invalid_argument("preference dimension does not match the bundle");
  for (std::size_t d = 0; d < w.dim(); ++d)
    if (!std::isfinite(w[d]))
      throw std::invalid_argument("preference components must be finite");
}

// Floor then renormalize: a proper distribution with finite logs.
void floor_and_normalize(std::vector<double>& p) {
  double sum = 0.0;
  for (double& x : p) {
    x = std::max(x, kProbFloor);
    sum += x;
  }
  for (double& x : p) x /= sum;
}

std::vector<double> softmax_policy(const double* log_behavior, const double* q, int n_actions,
                                   int dim, const double* w, double temperature) {
  std::vector<double> logits(static_cast<std::size_t>(n_actions));
  for (int a = 0; a < n_actions; ++a) {
    double l = log_behavior[a];
    if (std::isfinite(temperature)) {
      double u = 0.0;
      for (int d = 0; d < dim; ++d) u += w[d] * q[static_cast<std::size_t>(a) * dim + d];
      l += u / temperature;
    }
    logits[static_cast<std::size_t>(a)] = l;
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  std::vector<double> p(static_cast<std::size_t>(n_actions));
  for (int a = 0; a < n_actions; ++a) {
    p[static_cast<std::size_t>(a)] = std::exp(logits[static_cast<std::size_t>(a)] - m);
    sum += p[static_cast<std::size_t>(a)];
  }
  for (double& x : p) x /= sum;
  floor_and_normalize(p);
  return p;
}

// Solves A x = b for a small symmetric positive system by Gaussian
// elimination with partial pivoting.
std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b, int n) {
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int row = col + 1; row < n; ++row)
      if (std::abs(a[static_cast<std::size_t>(row) * n + col]) >
          std::abs(a[static_cast<std::size_t>(pivot) * n + col]))
        pivot = row;
    if (std::abs(a[static_cast<std::size_t>(pivot) * n + col]) < 1e-300)
      throw RankDeficiencyError("singular normal equations");
    if (pivot != col) {
      for (int k = 0; k < n; ++k)
        std::swap(a[static_cast<std::size_t>(pivot) * n + k],
                  a[static_cast<std::size_t>(col) * n + k]);
      std::swap(b[static_cast<std::size_t>(pivot)], b[static_cast<std::size_t>(col)]);
    }
    const double diag = a[static_cast<std::size_t>(col) * n + col];
    for (int row = col + 1; row < n; ++row) {
      const double factor = a[static_cast<std::size_t>(row) * n + col] / diag;
      if (factor == 0.0) continue;
      for (int k = col; k < n; ++k)
        a[static_cast<std::size_t>(row) * n + k] -= factor * a[static_cast<std::size_t>(col) * n + k];
      b[static_cast<std::size_t>(row)] -= factor * b[static_cast<std::size_t>(col)];
    }
  }
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  for (int row = n - 1; row >= 0; --row) {
    double acc = b[static_cast<std::size_t>(row)];
    for (int k = row + 1; k < n; ++k)
      acc -= a[static_cast<std::size_t>(row) * n + k] * x[static_cast<std::size_t>(k)];
    x[static_cast<std::size_t>(row)] = acc / a[static_cast<std::size_t>(row) * n + row];
  }
  return x;
}

std::vector<std::vector<int>> build_rc_index(const PolicyBundle& b) {
  std::vector<std::vector<int>> index(static_cast<std::size_t>(b.n_states));
  for (std::size_t i = 0; i < b.rc_state.size(); ++i)
    index[static_cast<std::size_t>(b.rc_state[i])].push_back(static_cast<int>(i));
  return index;
}

std::vector<double> rc_distribution(const PolicyBundle& b, int s, const PreferenceVector& w,
                                    const RewardVector& g) {
  if (static_cast<int>(g.size()) != b.dim)
    throw std::invalid_argument("return-to-go dimension does not match the bundle");
  std::vector<double> score(static_cast<std::size_t>(b.n_actions), b.smoothing);
  const double inv_g2 = 1.0 / (b.bandwidth_g * b.bandwidth_g);
  const double inv_w2 = 1.0 / (b.bandwidth_w * b.bandwidth_w);
  for (int i : b.rc_index[static_cast<std::size_t>(s)]) {
    const double* gi = b.rc_g.data() + static_cast<std::size_t>(i) * b.dim;
    const double* wi = b.rc_pref.data() + static_cast<std::size_t>(i) * b.dim;
    double dg2 = 0.0, dw1 = 0.0;
    for (int d = 0; d < b.dim; ++d) {
      const double dg = g[static_cast<std::size_t>(d)] - gi[d];
      dg2 += dg * dg;
      dw1 += std::abs(w[d] - wi[d]);
    }
    const double k = std::exp(-dg2 * inv_g2 - dw1 * dw1 * inv_w2);
    score[static_cast<std::size_t>(b.rc_action[static_cast<std::size_t>(i)])] += k;
  }
  double sum = 0.0;
  for (double x : score) sum += x;
  for (double& x : score) x /= sum;
  floor_and_normalize(score);
  return score;
}

int sample_categorical(const std::vector<double>& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    acc += p[a];
    if (u <= acc) return static_cast<int>(a);
  }
  return static_cast<int>(p.size()) - 1;
}

}  // namespace

RewardVector ReturnPredictor::predict(const PreferenceVector& w) const {
  if (static_cast<int>(w.dim()) != dim)
    throw std::invalid_argument("ReturnPredictor: preference dimension mismatch");
  RewardVector out(static_cast<std::size_t>(out_dim), 0.0);
  for (int o = 0; o < out_dim; ++o)
    for (int d = 0; d < dim; ++d)
      out[static_cast<std::size_t>(o)] += coef[static_cast<std::size_t>(o) * dim + d] * w[d];
  return out;
}

PolicyBundle train_regularized(const OfflineDataset& ds, const RegularizedConfig& cfg) {
  if (ds.trajectories.empty()) throw std::invalid_argument("train_regularized: empty dataset");
  if (cfg.grid < 2) throw std::invalid_argument("train_regularized: grid must be at least 2");
  if (cfg.bandwidth <= 0.0) throw std::invalid_argument("train_regularized: bandwidth must be positive");
  if (cfg.sweeps < 0) throw std::invalid_argument("train_regularized: sweeps must be nonnegative");
  if (!(cfg.temperature > 0.0)) throw std::invalid_argument("train_regularized: temperature must be positive");
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0))
    throw std::invalid_argument("train_regularized: gamma must lie in [0, 1)");

  const int dim = reward_dim(ds);
  const Bounds bounds = infer_bounds(ds, cfg.n_states, cfg.n_actions);
  const int S = bounds.n_states, A = bounds.n_actions;

  PolicyBundle b;
  b.kind = BundleKind::regularized;
  b.env_id = ds.env_id;
  b.gamma = cfg.gamma;
  b.n_states = S;
  b.n_actions = A;
  b.dim = dim;
  b.lattice.grid = cfg.grid;
  b.lattice.bandwidth = cfg.bandwidth;
  b.lattice.temperature = cfg.temperature;
  b.lattice.sweeps = cfg.sweeps;
  b.lattice.nodes = make_nodes(cfg.grid, dim);

  const std::size_t n_nodes = b.lattice.nodes.size();
  b.lattice.behavior_policy.assign(n_nodes * S * A, 0.0);
  b.lattice.q.assign(n_nodes * S * A * dim, 0.0);
  b.lattice.v.assign(n_nodes * S * dim, 0.0);

  // Per-node scratch.
  std::vector<double> cnt(static_cast<std::size_t>(S) * A);
  std::vector<double> wr(static_cast<std::size_t>(S) * A * dim);
  std::vector<double> wt(static_cast<std::size_t>(S) * A * S);
  std::vector<double> q(static_cast<std::size_t>(S) * A * dim);
  std::vector<double> q_next(static_cast<std::size_t>(S) * A * dim);
  std::vector<double> ev(static_cast<std::size_t>(S) * dim);
  struct Entry {
    int s, a;
    std::vector<std::pair<int, double>> successors;  // (s2, probability)
  };
  std::vector<Entry> entries;

  for (std::size_t k = 0; k < n_nodes; ++k) {
    const PreferenceVector& node = b.lattice.nodes[k];
    std::fill(cnt.begin(), cnt.end(), 0.0);
    std::fill(wr.begin(), wr.end(), 0.0);
    std::fill(wt.begin(), wt.end(), 0.0);

    for (std::size_t ti = 0; ti < ds.trajectories.size(); ++ti) {
      const Trajectory& traj = ds.trajectories[ti];
      const PreferenceVector& label = trajectory_label(traj, ti);
      if (static_cast<int>(label.dim()) != dim)
        throw std::invalid_argument("train_regularized: label dimension mismatch");
      const double d1 = l1_distance(label, node);
      const double kw = std::exp(-d1 * d1 / (cfg.bandwidth * cfg.bandwidth));
      if (kw < kKernelCutoff) continue;
      for (const Transition& tr : traj.transitions) {
        const std::size_t sa = static_cast<std::size_t>(tr.state) * A + tr.action;
        cnt[sa] += kw;
        for (int d = 0; d < dim; ++d) wr[sa * dim + d] += kw * tr.reward[static_cast<std::size_t>(d)];
        wt[sa * S + tr.next_state] += kw;
      }
    }

    // Behavior policy with add-one smoothing.
    double* bp = b.lattice.behavior_policy.data() + k * S * A;
    for (int s = 0; s < S; ++s) {
      double row = 0.0;
      for (int a = 0; a < A; ++a) row += cnt[static_cast<std::size_t>(s) * A + a];
      for (int a = 0; a < A; ++a)
        bp[static_cast<std::size_t>(s) * A + a] =
            (cnt[static_cast<std::size_t>(s) * A + a] + 1.0) / (row + A);
    }

    // Weighted empirical model restricted to supported pairs.
    entries.clear();
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const std::size_t sa = static_cast<std::size_t>(s) * A + a;
        if (cnt[sa] <= 0.0) continue;
        Entry e{s, a, {}};
        for (int s2 = 0; s2 < S; ++s2) {
          const double w2 = wt[sa * S + s2];
          if (w2 > 0.0) e.successors.emplace_back(s2, w2 / cnt[sa]);
        }
        for (int d = 0; d < dim; ++d) wr[sa * dim + d] /= cnt[sa];
        entries.push_back(std::move(e));
      }

    // Fitted expected-SARSA: synchronous sweeps under the regularized policy.
    std::fill(q.begin(), q.end(), 0.0);
    std::vector<double> log_bp(static_cast<std::size_t>(S) * A);
    for (std::size_t i = 0; i < log_bp.size(); ++i) log_bp[i] = std::log(bp[i]);
    for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
      for (int s = 0; s < S; ++s) {
        const std::vector<double> pi =
            softmax_policy(log_bp.data() + static_cast<std::size_t>(s) * A,
                           q.data() + static_cast<std::size_t>(s) * A * dim, A, dim,
                           node.weights.data(), cfg.temperature);
        for (int d = 0; d < dim; ++d) {
          double acc = 0.0;
          for (int a = 0; a < A; ++a)
            acc += pi[static_cast<std::size_t>(a)] *
                   q[(static_cast<std::size_t>(s) * A + a) * dim + d];
          ev[static_cast<std::size_t>(s) * dim + d] = acc;
        }
      }
      std::copy(q.begin(), q.end(), q_next.begin());
      for (const Entry& e : entries) {
        const std::size_t sa = static_cast<std::size_t>(e.s) * A + e.a;
        for (int d = 0; d < dim; ++d) {
          double acc = wr[sa * dim + d];
          for (const auto& [s2, p] : e.successors)
            acc += cfg.gamma * p * ev[static_cast<std::size_t>(s2) * dim + d];
          q_next[sa * dim + d] = acc;
        }
      }
      std::swap(q, q_next);
    }

    std::copy(q.begin(), q.end(), b.lattice.q.begin() + k * S * A * dim);
    double* v = b.lattice.v.data() + k * S * dim;
    for (int s = 0; s < S; ++s) {
      const std::vector<double> pi =
          softmax_policy(log_bp.data() + static_cast<std::size_t>(s) * A,
                         q.data() + static_cast<std::size_t>(s) * A * dim, A, dim,
                         node.weights.data(), cfg.temperature);
      for (int d = 0; d < dim; ++d) {
        double acc = 0.0;
        for (int a = 0; a < A; ++a)
          acc += pi[static_cast<std::size_t>(a)] * q[(static_cast<std::size_t>(s) * A + a) * dim + d];
        v[static_cast<std::size_t>(s) * dim + d] = acc;
      }
    }
  }
  return b;
}

ReturnPredictor fit_return_predictor(const OfflineDataset& ds, double tolerance) {
  if (ds.trajectories.empty())
    throw std::invalid_argument("fit_return_predictor: empty dataset");
  if (tolerance < 0.0) throw std::invalid_argument("fit_return_predictor: negative tolerance");
  const std::size_t n = ds.trajectories.size();
  const int out_dim = static_cast<int>(ds.trajectories.front().return_vector.size());

  auto shrunk = [&](double x) { return x - tolerance * std::abs(x); };
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i) {
    const RewardVector& ri = ds.trajectories[i].return_vector;
    bool dominated = false;
    for (std::size_t j = 0; j < n && !dominated; ++j) {
      if (j == i) continue;
      const RewardVector& rj = ds.trajectories[j].return_vector;
      bool all_ge = true, any_gt = false;
      for (int d = 0; d < out_dim; ++d) {
        const double s = shrunk(rj[static_cast<std::size_t>(d)]);
        if (s < ri[static_cast<std::size_t>(d)]) all_ge = false;
        if (s > ri[static_cast<std::size_t>(d)]) any_gt = true;
      }
      dominated = all_ge && any_gt;
    }
    if (!dominated) kept.push_back(i);
  }

  const int dim = static_cast<int>(trajectory_label(ds.trajectories[kept.front()], kept.front()).dim());
  std::vector<PreferenceVector> distinct;
  for (std::size_t i : kept) {
    const PreferenceVector& w = trajectory_label(ds.trajectories[i], i);
    bool seen = false;
    for (const PreferenceVector& u : distinct)
      if (l1_distance(u, w) < 1e-12) {
        seen = true;
        break;
      }
    if (!seen) distinct.push_back(w);
  }
  if (distinct.size() < 2)
    throw RankDeficiencyError("fit_return_predictor: fewer than 2 distinct preferences");

  std::vector<double> gram(static_cast<std::size_t>(dim) * dim, 0.0);
  std::vector<std::vector<double>> rhs(static_cast<std::size_t>(out_dim),
                                       std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  for (std::size_t i : kept) {
    const PreferenceVector& w = trajectory_label(ds.trajectories[i], i);
    const RewardVector& r = ds.trajectories[i].return_vector;
    for (int p = 0; p < dim; ++p) {
      for (int q = 0; q < dim; ++q) gram[static_cast<std::size_t>(p) * dim + q] += w[p] * w[q];
      for (int o = 0; o < out_dim; ++o)
        rhs[static_cast<std::size_t>(o)][static_cast<std::size_t>(p)] +=
            w[p] * r[static_cast<std::size_t>(o)];
    }
  }
  for (int p = 0; p < dim; ++p) gram[static_cast<std::size_t>(p) * dim + p] += kRidge;

  ReturnPredictor pred;
  pred.dim = dim;
  pred.out_dim = out_dim;
  pred.coef.assign(static_cast<std::size_t>(out_dim) * dim, 0.0);
  for (int o = 0; o < out_dim; ++o) {
    const std::vector<double> x = solve_dense(gram, rhs[static_cast<std::size_t>(o)], dim);
    for (int d = 0; d < dim; ++d) pred.coef[static_cast<std::size_t>(o) * dim + d] = x[static_cast<std::size_t>(d)];
  }
  for (double c : pred.coef)
    if (!std::isfinite(c)) throw RankDeficiencyError("fit_return_predictor: non-finite coefficients");
  return pred;
}

PolicyBundle train_return_conditioned(const OfflineDataset& ds,
                                      const ReturnConditionedConfig& cfg) {
  if (ds.trajectories.empty())
    throw std::invalid_argument("train_return_conditioned: empty dataset");
  if (cfg.bandwidth_g <= 0.0 || cfg.bandwidth_w <= 0.0)
    throw std::invalid_argument("train_return_conditioned: bandwidths must be positive");
  if (cfg.smoothing <= 0.0)
    throw std::invalid_argument("train_return_conditioned: smoothing must be positive");

  const int dim = reward_dim(ds);
  const Bounds bounds = infer_bounds(ds, cfg.n_states, cfg.n_actions);

  PolicyBundle b;
  b.kind = BundleKind::return_conditioned;
  b.env_id = ds.env_id;
  b.gamma = cfg.gamma;
  b.n_states = bounds.n_states;
  b.n_actions = bounds.n_actions;
  b.dim = dim;
  b.bandwidth_g = cfg.bandwidth_g;
  b.bandwidth_w = cfg.bandwidth_w;
  b.smoothing = cfg.smoothing;
  b.predictor = fit_return_predictor(ds, cfg.filter_tolerance);

  for (std::size_t ti = 0; ti < ds.trajectories.size(); ++ti) {
    const Trajectory& traj = ds.trajectories[ti];
    const PreferenceVector& label = trajectory_label(traj, ti);
    if (static_cast<int>(label.dim()) != dim)
      throw std::invalid_argument("train_return_conditioned: label dimension mismatch");
    // Suffix sums: g_t includes the reward at t.
    RewardVector g(static_cast<std::size_t>(dim), 0.0);
    std::vector<RewardVector> gs(traj.transitions.size());
    for (std::size_t t = traj.transitions.size(); t-- > 0;) {
      for (int d = 0; d < dim; ++d)
        g[static_cast<std::size_t>(d)] += traj.transitions[t].reward[static_cast<std::size_t>(d)];
      gs[t] = g;
    }
    for (std::size_t t = 0; t < traj.transitions.size(); ++t) {
      const Transition& tr = traj.transitions[t];
      b.rc_state.push_back(tr.state);
      b.rc_action.push_back(tr.action);
      for (int d = 0; d < dim; ++d) b.rc_g.push_back(gs[t][static_cast<std::size_t>(d)]);
      for (int d = 0; d < dim; ++d) b.rc_pref.push_back(label[d]);
    }
  }
  b.rc_index = build_rc_index(b);
  return b;
}

std::vector<double> policy_distribution(const PolicyBundle& b, int s, const PreferenceVector& w,
                                        const std::optional<RewardVector>& g) {
  check_state(b, s);
  check_preference(b, w);
  if (b.kind == BundleKind::return_conditioned)
    return rc_distribution(b, s, w, g ? *g : b.predictor.predict(w));

  const int A = b.n_actions, dim = b.dim, S = b.n_states;
  const LatticeMix mix = locate(b.lattice.grid, dim, w);
  std::vector<double> log_bp(static_cast<std::size_t>(A), 0.0);
  std::vector<double> q(static_cast<std::size_t>(A) * dim, 0.0);
  for (int m = 0; m < mix.count; ++m) {
    if (mix.wgt[m] <= 0.0) continue;
    const std::size_t k = static_cast<std::size_t>(mix.idx[m]);
    const double* bp = b.lattice.behavior_policy.data() + (k * S + s) * A;
    const double* qk = b.lattice.q.data() + ((k * S + s) * A) * dim;
    for (int a = 0; a < A; ++a) {
      log_bp[static_cast<std::size_t>(a)] += mix.wgt[m] * std::log(bp[a]);
      for (int d = 0; d < dim; ++d)
        q[static_cast<std::size_t>(a) * dim + d] += mix.wgt[m] * qk[static_cast<std::size_t>(a) * dim + d];
    }
  }
  return softmax_policy(log_bp.data(), q.data(), A, dim, w.weights.data(),
                        b.lattice.temperature);
}

double policy_logprob(const PolicyBundle& b, int s, int a, const PreferenceVector& w,
                      const std::optional<RewardVector>& g) {
  check_action(b, a);
  const std::vector<double> p = policy_distribution(b, s, w, g);
  return std::log(p[static_cast<std::size_t>(a)]);
}

RewardVector q_value(const PolicyBundle& b, int s, int a, const PreferenceVector& w) {
  check_regularized(b);
  check_state(b, s);
  check_action(b, a);
  check_preference(b, w);
  const LatticeMix mix = locate(b.lattice.grid, b.dim, w);
  RewardVector out(static_cast<std::size_t>(b.dim), 0.0);
  for (int m = 0; m < mix.count; ++m) {
    if (mix.wgt[m] <= 0.0) continue;
    const double* qk =
        b.lattice.q.data() +
        ((static_cast<std::size_t>(mix.idx[m]) * b.n_states + s) * b.n_actions + a) * b.dim;
    for (int d = 0; d < b.dim; ++d) out[static_cast<std::size_t>(d)] += mix.wgt[m] * qk[d];
  }
  return out;
}

RewardVector v_value(const PolicyBundle& b, int s, const PreferenceVector& w) {
  check_regularized(b);
  check_state(b, s);
  check_preference(b, w);
  const LatticeMix mix = locate(b.lattice.grid, b.dim, w);
  RewardVector out(static_cast<std::size_t>(b.dim), 0.0);
  for (int m = 0; m < mix.count; ++m) {
    if (mix.wgt[m] <= 0.0) continue;
    const double* vk =
        b.lattice.v.data() + (static_cast<std::size_t>(mix.idx[m]) * b.n_states + s) * b.dim;
    for (int d = 0; d < b.dim; ++d) out[static_cast<std::size_t>(d)] += mix.wgt[m] * vk[d];
  }
  return out;
}

PreferenceSlice slice_at(const PolicyBundle& b, const PreferenceVector& w) {
  check_regularized(b);
  check_preference(b, w);
  const int S = b.n_states, A = b.n_actions, dim = b.dim;
  PreferenceSlice slice;
  slice.n_states = S;
  slice.n_actions = A;
  slice.dim = dim;
  slice.temperature = b.lattice.temperature;
  slice.preference = w.weights;
  slice.log_behavior.assign(static_cast<std::size_t>(S) * A, 0.0);
  slice.q.assign(static_cast<std::size_t>(S) * A * dim, 0.0);
  slice.v.assign(static_cast<std::size_t>(S) * dim, 0.0);
  const LatticeMix mix = locate(b.lattice.grid, dim, w);
  for (int m = 0; m < mix.count; ++m) {
    if (mix.wgt[m] <= 0.0) continue;
    const std::size_t k = static_cast<std::size_t>(mix.idx[m]);
    const double wm = mix.wgt[m];
    const double* bp = b.lattice.behavior_policy.data() + k * S * A;
    const double* qk = b.lattice.q.data() + k * S * A * dim;
    const double* vk = b.lattice.v.data() + k * S * dim;
    for (std::size_t i = 0; i < slice.log_behavior.size(); ++i)
      slice.log_behavior[i] += wm * std::log(bp[i]);
    for (std::size_t i = 0; i < slice.q.size(); ++i) slice.q[i] += wm * qk[i];
    for (std::size_t i = 0; i < slice.v.size(); ++i) slice.v[i] += wm * vk[i];
  }
  return slice;
}

std::vector<double> slice_distribution(const PreferenceSlice& slice, int s) {
  if (s < 0 || s >= slice.n_states) throw std::out_of_range("state id out of range");
  return softmax_policy(slice.log_behavior.data() + static_cast<std::size_t>(s) * slice.n_actions,
                        slice.q.data() + static_cast<std::size_t>(s) * slice.n_actions * slice.dim,
                        slice.n_actions, slice.dim, slice.preference.data(), slice.temperature);
}

BundlePolicy::BundlePolicy(const PolicyBundle& bundle, PreferenceVector preference)
    : bundle_(&bundle), pref_(std::move(preference)) {
  check_preference(bundle, pref_);
  if (bundle.kind == BundleKind::regularized) {
    pi_.assign(static_cast<std::size_t>(bundle.n_states) * bundle.n_actions, 0.0);
    for (int s = 0; s < bundle.n_states; ++s) {
      const std::vector<double> p = policy_distribution(bundle, s, pref_);
      std::copy(p.begin(), p.end(), pi_.begin() + static_cast<std::size_t>(s) * bundle.n_actions);
    }
  }
}

void BundlePolicy::begin_episode() {
  if (bundle_->kind == BundleKind::return_conditioned) g_ = bundle_->predictor.predict(pref_);
}

int BundlePolicy::act(int, int state, std::mt19937_64& rng) {
  if (bundle_->kind == BundleKind::regularized) {
    check_state(*bundle_, state);
    const std::vector<double> p(
        pi_.begin() + static_cast<std::size_t>(state) * bundle_->n_actions,
        pi_.begin() + static_cast<std::size_t>(state + 1) * bundle_->n_actions);
    return sample_categorical(p, rng);
  }
  const std::vector<double> p = policy_distribution(*bundle_, state, pref_, g_);
  return sample_categorical(p, rng);
}

void BundlePolicy::observe(const Transition& tr) {
  if (bundle_->kind != BundleKind::return_conditioned) return;
  for (std::size_t d = 0; d < g_.size() && d < tr.reward.size(); ++d) g_[d] -= tr.reward[d];
}

namespace {

nlohmann::ordered_json temperature_to_json(double t) {
  if (std::isfinite(t)) return t;
  return "infinity";
}

double temperature_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "infinity") return std::numeric_limits<double>::infinity();
    throw std::invalid_argument("bundle_from_json: bad temperature encoding");
  }
  return j.get<double>();
}

}  // namespace

std::string bundle_to_json(const PolicyBundle& b) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = b.kind == BundleKind::regularized ? "regularized" : "return_conditioned";
  j["env_id"] = b.env_id;
  j["gamma"] = b.gamma;
  j["n_states"] = b.n_states;
  j["n_actions"] = b.n_actions;
  j["dim"] = b.dim;
  if (b.kind == BundleKind::regularized) {
    nlohmann::ordered_json lat;
    lat["grid"] = b.lattice.grid;
    lat["bandwidth"] = b.lattice.bandwidth;
    lat["temperature"] = temperature_to_json(b.lattice.temperature);
    lat["sweeps"] = b.lattice.sweeps;
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const PreferenceVector& n : b.lattice.nodes) nodes.push_back(n.weights);
    lat["nodes"] = std::move(nodes);
    lat["behavior_policy"] = b.lattice.behavior_policy;
    lat["q"] = b.lattice.q;
    lat["v"] = b.lattice.v;
    j["lattice"] = std::move(lat);
  } else {
    j["bandwidth_g"] = b.bandwidth_g;
    j["bandwidth_w"] = b.bandwidth_w;
    j["smoothing"] = b.smoothing;
    j["rc_state"] = b.rc_state;
    j["rc_action"] = b.rc_action;
    j["rc_g"] = b.rc_g;
    j["rc_pref"] = b.rc_pref;
    nlohmann::ordered_json pred;
    pred["dim"] = b.predictor.dim;
    pred["out_dim"] = b.predictor.out_dim;
    pred["coef"] = b.predictor.coef;
    j["predictor"] = std::move(pred);
  }
  return j.dump();
}

PolicyBundle bundle_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("format_version").get<int>() != 1)
    throw std::invalid_argument("bundle_from_json: unsupported format version");
  PolicyBundle b;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "regularized")
    b.kind = BundleKind::regularized;
  else if (kind == "return_conditioned")
    b.kind = BundleKind::return_conditioned;
  else
    throw std::invalid_argument("bundle_from_json: unknown kind '" + kind + "'");
  b.env_id = j.at("env_id").get<std::string>();
  b.gamma = j.at("gamma").get<double>();
  b.n_states = j.at("n_states").get<int>();
  b.n_actions = j.at("n_actions").get<int>();
  b.dim = j.at("dim").get<int>();
  if (b.n_states <= 0 || b.n_actions <= 0 || b.dim <= 0)
    throw std::invalid_argument("bundle_from_json: bad table shape");

  if (b.kind == BundleKind::regularized) {
    const nlohmann::json& lat = j.at("lattice");
    b.lattice.grid = lat.at("grid").get<int>();
    b.lattice.bandwidth = lat.at("bandwidth").get<double>();
    b.lattice.temperature = temperature_from_json(lat.at("temperature"));
    b.lattice.sweeps = lat.at("sweeps").get<int>();
    for (const auto& n : lat.at("nodes"))
      b.lattice.nodes.push_back(PreferenceVector{n.get<std::vector<double>>()});
    b.lattice.behavior_policy = lat.at("behavior_policy").get<std::vector<double>>();
    b.lattice.q = lat.at("q").get<std::vector<double>>();
    b.lattice.v = lat.at("v").get<std::vector<double>>();
    const std::size_t n_nodes = b.lattice.nodes.size();
    const std::size_t sa = static_cast<std::size_t>(b.n_states) * b.n_actions;
    if (b.lattice.behavior_policy.size() != n_nodes * sa ||
        b.lattice.q.size() != n_nodes * sa * b.dim ||
        b.lattice.v.size() != n_nodes * b.n_states * b.dim)
      throw std::invalid_argument("bundle_from_json: lattice table sizes disagree");
  } else {
    b.bandwidth_g = j.at("bandwidth_g").get<double>();
    b.bandwidth_w = j.at("bandwidth_w").get<double>();
    b.smoothing = j.at("smoothing").get<double>();
    b.rc_state = j.at("rc_state").get<std::vector<int>>();
    b.rc_action = j.at("rc_action").get<std::vector<int>>();
    b.rc_g = j.at("rc_g").get<std::vector<double>>();
    b.rc_pref = j.at("rc_pref").get<std::vector<double>>();
    const nlohmann::json& pred = j.at("predictor");
    b.predictor.dim = pred.at("dim").get<int>();
    b.predictor.out_dim = pred.at("out_dim").get<int>();
    b.predictor.coef = pred.at("coef").get<std::vector<double>>();
    if (b.rc_state.size() != b.rc_action.size() ||
        b.rc_g.size() != b.rc_state.size() * b.dim ||
        b.rc_pref.size() != b.rc_state.size() * b.dim)
      throw std::invalid_argument("bundle_from_json: tuple arrays disagree");
    for (int s : b.rc_state)
      if (s < 0 || s >= b.n_states)
        throw std::invalid_argument("bundle_from_json: tuple state out of range");
    b.rc_index = build_rc_index(b);
  }
  return b;
}

void save_bundle(const PolicyBundle& b, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_bundle: cannot open " + path);
  out << bundle_to_json(b) << '\n';
  if (!out) throw std::runtime_error("save_bundle: failed writing " + path);
}

PolicyBundle load_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_bundle: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return bundle_from_json(buf.str());
}

}  // namespace pdoa
