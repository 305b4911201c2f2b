#include "pdoa/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pdoa/core.hpp"
#include "pdoa/random.hpp"

namespace pdoa {

namespace {

constexpr double kSafetyTol = 1e-9;

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt6(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

void require_labels(const OfflineDataset& ds, const char* who) {
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i)
    if (!ds.trajectories[i].behavioral_preference)
      throw MissingLabelsError(std::string(who) + ": trajectory " + std::to_string(i) +
                               " has no behavioral preference label");
}

std::pair<double, double> label_first_component_range(const OfflineDataset& ds) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const Trajectory& traj : ds.trajectories) {
    const PreferenceVector head =
        ds.n_constrained > 0
            ? unconstrained_label_part(*traj.behavioral_preference, ds.n_unconstrained)
            : *traj.behavioral_preference;
    lo = std::min(lo, head[0]);
    hi = std::max(hi, head[0]);
  }
  return {lo, hi};
}

bool weakly_dominates(const RewardVector& a, const RewardVector& b) {
  bool any_gt = false;
  for (std::size_t d = 0; d < a.size(); ++d) {
    if (a[d] < b[d]) return false;
    if (a[d] > b[d]) any_gt = true;
  }
  return any_gt;
}

double hv2(std::vector<std::pair<double, double>> pts, double rx, double ry) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second > b.second;
  });
  double hv = 0.0, top = ry;
  for (const auto& [x, y] : pts) {
    if (y > top) {
      hv += (x - rx) * (y - top);
      top = y;
    }
  }
  return hv;
}

std::vector<RewardVector> retained_above(const std::vector<RewardVector>& points,
                                         const RewardVector& ref) {
  std::vector<RewardVector> kept;
  for (const RewardVector& p : points) {
    if (p.size() != ref.size())
      throw std::invalid_argument("hypervolume: point and reference dimensions disagree");
    bool ok = true;
    for (std::size_t d = 0; d < p.size(); ++d)
      if (p[d] < ref[d]) {
        ok = false;
        break;
      }
    if (ok) kept.push_back(p);
  }
  return kept;
}

std::vector<PreferenceVector> simplex_grid(int dim, int steps) {
  std::vector<PreferenceVector> out;
  const double denom = steps;
  if (dim == 1) {
    out.push_back(PreferenceVector{{1.0}});
  } else if (dim == 2) {
    for (int i = 0; i <= steps; ++i)
      out.push_back(PreferenceVector{{i / denom, (steps - i) / denom}});
  } else if (dim == 3) {
    for (int i = 0; i <= steps; ++i)
      for (int j = 0; j <= steps - i; ++j)
        out.push_back(PreferenceVector{{i / denom, j / denom, (steps - i - j) / denom}});
  } else {
    throw std::invalid_argument("simplex enumeration supports up to 3 objectives");
  }
  return out;
}

struct RolloutStats {
  RewardVector mean_return;
  CostVector mean_cost;
};

RolloutStats mean_rollout(const CmoMdpSpec& mdp, RolloutPolicy& policy, int episodes,
                          std::uint64_t seed) {
  const auto results = rollout(mdp, policy, episodes, seed);
  RolloutStats stats;
  stats.mean_return.assign(static_cast<std::size_t>(mdp.n_rewards), 0.0);
  stats.mean_cost.assign(static_cast<std::size_t>(mdp.n_costs), 0.0);
  for (const auto& [r, c] : results) {
    for (std::size_t d = 0; d < stats.mean_return.size(); ++d) stats.mean_return[d] += r[d];
    for (std::size_t d = 0; d < stats.mean_cost.size(); ++d) stats.mean_cost[d] += c[d];
  }
  for (double& x : stats.mean_return) x /= episodes;
  for (double& x : stats.mean_cost) x /= episodes;
  return stats;
}

double row_utility(const Target& target, const RewardVector& mean_return, int n_unconstrained) {
  if (target.preference) {
    double u = 0.0;
    for (int d = 0; d < n_unconstrained; ++d) u += (*target.preference)[d] * mean_return[static_cast<std::size_t>(d)];
    return u;
  }
  double u = 0.0;
  for (int d = 0; d < n_unconstrained; ++d) u += mean_return[static_cast<std::size_t>(d)];
  return u / n_unconstrained;
}

bool same_threshold(const std::optional<CostVector>& a, const std::optional<CostVector>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  return *a == *b;
}

std::string method_name(EvalMethod m) {
  switch (m) {
    case EvalMethod::pdoa:
      return "pdoa";
    case EvalMethod::oracle:
      return "oracle";
    case EvalMethod::bc_finetune:
      return "bc_finetune";
  }
  return "unknown";
}

}  // namespace

TargetSet preference_targets_from_support(const OfflineDataset& ds, int count) {
  if (count < 1) throw std::invalid_argument("preference_targets_from_support: count must be positive");
  if (ds.trajectories.empty())
    throw std::invalid_argument("preference_targets_from_support: empty dataset");
  require_labels(ds, "preference_targets_from_support");
  if (ds.n_unconstrained != 2)
    throw std::invalid_argument("preference_targets_from_support: needs exactly 2 reward objectives");
  const auto [lo, hi] = label_first_component_range(ds);
  TargetSet out;
  for (int i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / static_cast<double>(count - 1);
    Target t;
    t.kind = TargetKind::preference;
    t.preference = normalize_preference({f, 1.0 - f});
    out.targets.push_back(std::move(t));
  }
  return out;
}

TargetSet constrained_targets_from_support(const OfflineDataset& ds, int preference_count,
                                           int threshold_count) {
  if (preference_count < 1 || threshold_count < 1)
    throw std::invalid_argument("constrained_targets_from_support: counts must be positive");
  if (ds.trajectories.empty())
    throw std::invalid_argument("constrained_targets_from_support: empty dataset");
  if (ds.n_constrained < 1)
    throw std::invalid_argument("constrained_targets_from_support: dataset has no cost objectives");
  require_labels(ds, "constrained_targets_from_support");
  if (ds.n_unconstrained != 2)
    throw std::invalid_argument("constrained_targets_from_support: needs exactly 2 reward objectives");

  const auto [lo, hi] = label_first_component_range(ds);
  std::vector<PreferenceVector> prefs;
  for (int i = 0; i < preference_count; ++i) {
    const double f = preference_count == 1
                         ? 0.5 * (lo + hi)
                         : lo + (hi - lo) * i / static_cast<double>(preference_count - 1);
    prefs.push_back(normalize_preference({f, 1.0 - f}));
  }

  const int K = ds.n_constrained;
  CostVector cmin(static_cast<std::size_t>(K), std::numeric_limits<double>::infinity());
  CostVector cmax(static_cast<std::size_t>(K), -std::numeric_limits<double>::infinity());
  for (const Trajectory& traj : ds.trajectories) {
    if (static_cast<int>(traj.cost_return.size()) != K)
      throw std::invalid_argument("constrained_targets_from_support: cost dimension mismatch");
    for (int j = 0; j < K; ++j) {
      cmin[static_cast<std::size_t>(j)] = std::min(cmin[static_cast<std::size_t>(j)], traj.cost_return[static_cast<std::size_t>(j)]);
      cmax[static_cast<std::size_t>(j)] = std::max(cmax[static_cast<std::size_t>(j)], traj.cost_return[static_cast<std::size_t>(j)]);
    }
  }

  TargetSet out;
  for (int t = 1; t <= threshold_count; ++t) {
    CostVector beta(static_cast<std::size_t>(K));
    for (int j = 0; j < K; ++j)
      beta[static_cast<std::size_t>(j)] =
          cmin[static_cast<std::size_t>(j)] +
          t * (cmax[static_cast<std::size_t>(j)] - cmin[static_cast<std::size_t>(j)]) /
              static_cast<double>(threshold_count + 1);
    for (const PreferenceVector& w : prefs) {
      Target tg;
      tg.kind = TargetKind::both;
      tg.preference = w;
      tg.threshold = beta;
      out.targets.push_back(std::move(tg));
    }
  }
  return out;
}

double average_utility(const std::vector<EvaluationRow>& rows,
                       const std::optional<CostVector>& group) {
  double sum = 0.0;
  int n = 0;
  for (const EvaluationRow& row : rows) {
    if (group && !same_threshold(row.target.threshold, group)) continue;
    sum += row.utility;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("average_utility: no rows after filtering");
  return sum / n;
}

std::vector<RewardVector> pareto_filter(const std::vector<RewardVector>& points) {
  std::vector<RewardVector> kept;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points.empty() && points[i].size() != points.front().size())
      throw std::invalid_argument("pareto_filter: points disagree on dimension");
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j)
      dominated = j != i && weakly_dominates(points[j], points[i]);
    if (dominated) continue;
    bool duplicate = false;
    for (const RewardVector& q : kept)
      if (q == points[i]) {
        duplicate = true;
        break;
      }
    if (!duplicate) kept.push_back(points[i]);
  }
  return kept;
}

double hypervolume(const std::vector<RewardVector>& points, const RewardVector& ref) {
  if (ref.empty() || ref.size() > 3)
    throw UnsupportedOperationError(
        "hypervolume: exact computation supports 1 to 3 objectives; use the Monte-Carlo estimator");
  const std::vector<RewardVector> pts = retained_above(points, ref);
  if (pts.empty()) return 0.0;

  if (ref.size() == 1) {
    double best = 0.0;
    for (const RewardVector& p : pts) best = std::max(best, p[0] - ref[0]);
    return best;
  }
  if (ref.size() == 2) {
    std::vector<std::pair<double, double>> xy;
    xy.reserve(pts.size());
    for (const RewardVector& p : pts) xy.emplace_back(p[0], p[1]);
    return hv2(std::move(xy), ref[0], ref[1]);
  }

  // Slicing over descending z: each slab's area is the 2-D hypervolume of the
  // points reaching that depth.
  std::vector<RewardVector> sorted = pts;
  std::sort(sorted.begin(), sorted.end(),
            [](const RewardVector& a, const RewardVector& b) { return a[2] > b[2]; });
  double hv = 0.0;
  std::vector<std::pair<double, double>> active;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double z = sorted[i][2];
    while (i < sorted.size() && sorted[i][2] == z) {
      active.emplace_back(sorted[i][0], sorted[i][1]);
      ++i;
    }
    const double z_next = i < sorted.size() ? sorted[i][2] : ref[2];
    hv += hv2(active, ref[0], ref[1]) * (z - z_next);
  }
  return hv;
}

double hypervolume_monte_carlo(const std::vector<RewardVector>& points, const RewardVector& ref,
                               int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("hypervolume_monte_carlo: need samples");
  if (ref.empty()) throw std::invalid_argument("hypervolume_monte_carlo: empty reference");
  const std::vector<RewardVector> pts = retained_above(points, ref);
  if (pts.empty()) return 0.0;

  RewardVector upper = ref;
  for (const RewardVector& p : pts)
    for (std::size_t d = 0; d < upper.size(); ++d) upper[d] = std::max(upper[d], p[d]);
  double volume = 1.0;
  for (std::size_t d = 0; d < upper.size(); ++d) volume *= upper[d] - ref[d];
  if (volume <= 0.0) return 0.0;

  std::mt19937_64 rng = make_rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> x(ref.size());
  long long hits = 0;
  for (int s = 0; s < n_samples; ++s) {
    for (std::size_t d = 0; d < ref.size(); ++d) x[d] = ref[d] + unit(rng) * (upper[d] - ref[d]);
    for (const RewardVector& p : pts) {
      bool covers = true;
      for (std::size_t d = 0; d < ref.size(); ++d)
        if (p[d] < x[d]) {
          covers = false;
          break;
        }
      if (covers) {
        ++hits;
        break;
      }
    }
  }
  return volume * static_cast<double>(hits) / static_cast<double>(n_samples);
}

namespace {

EvaluationRow evaluate_one_target(const PolicyBundle& bundle, const CmoMdpSpec& mdp,
                                  const OfflineDataset& ds,
                                  const GaussianPreferenceDistribution& prior,
                                  const TabularStochasticPolicy* bc_base, const Target& target,
                                  int index, const EvaluationConfig& cfg,
                                  const AdaptationConfig& acfg, std::uint64_t tseed) {
  DemonstrationSet demos = build_demo_set(ds, target, cfg.demo_m, cfg.demo_k, mix_seed(tseed, 1));
  if (ds.n_constrained > 0)
    for (Transition& tr : demos.transitions) tr = augment_transition(tr);

  EvaluationRow row;
  row.target_index = index;
  row.target = target;

  if (cfg.method == EvalMethod::pdoa) {
    PdoaResult res = pdoa(bundle, demos, prior, acfg, mix_seed(tseed, 2));
    row.adapted_preference = res.adapted_preference;
    const RolloutStats stats = mean_rollout(mdp, *res.policy, cfg.episodes, mix_seed(tseed, 3));
    row.return_vector = stats.mean_return;
    row.cost_return = stats.mean_cost;
  } else if (cfg.method == EvalMethod::bc_finetune) {
    const TabularStochasticPolicy tuned = bc_finetune(*bc_base, demos);
    TabularRolloutPolicy policy(tuned);
    row.adapted_preference = PreferenceVector{
        std::vector<double>(static_cast<std::size_t>(bundle.dim), 1.0 / bundle.dim)};
    const RolloutStats stats = mean_rollout(mdp, policy, cfg.episodes, mix_seed(tseed, 3));
    row.return_vector = stats.mean_return;
    row.cost_return = stats.mean_cost;
  } else {
    // Preference-informed oracle: query the bundle at the true preference, or
    // in constrained runs enumerate augmented preferences and keep the best
    // safe performer.
    if (ds.n_constrained == 0) {
      if (!target.preference)
        throw std::invalid_argument("oracle evaluation needs a target preference");
      row.adapted_preference = *target.preference;
      BundlePolicy policy(bundle, row.adapted_preference);
      const RolloutStats stats = mean_rollout(mdp, policy, cfg.episodes, mix_seed(tseed, 3));
      row.return_vector = stats.mean_return;
      row.cost_return = stats.mean_cost;
    } else {
      std::vector<PreferenceVector> candidates;
      if (target.preference) {
        for (int li = 0; li <= 20; ++li) {
          std::vector<double> raw = target.preference->weights;
          raw.resize(static_cast<std::size_t>(bundle.dim), li / 20.0);
          candidates.push_back(normalize_preference(raw));
        }
      } else {
        candidates = simplex_grid(bundle.dim, 10);
      }
      bool have_safe = false, have_any = false;
      double best_utility = -std::numeric_limits<double>::infinity();
      double least_cost = std::numeric_limits<double>::infinity();
      for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
        BundlePolicy policy(bundle, candidates[ci]);
        const RolloutStats stats =
            mean_rollout(mdp, policy, cfg.episodes, mix_seed(tseed, 3, ci));
        const double utility = row_utility(target, stats.mean_return, ds.n_unconstrained);
        bool safe = true;
        double total = 0.0;
        for (std::size_t j = 0; j < stats.mean_cost.size(); ++j) {
          if (target.threshold && stats.mean_cost[j] > (*target.threshold)[j] + kSafetyTol)
            safe = false;
          total += stats.mean_cost[j];
        }
        const bool better_safe = safe && (!have_safe || utility > best_utility);
        const bool better_fallback = !have_safe && !safe && (!have_any || total < least_cost);
        if (better_safe || better_fallback) {
          row.adapted_preference = candidates[ci];
          row.return_vector = stats.mean_return;
          row.cost_return = stats.mean_cost;
          if (better_safe) {
            have_safe = true;
            best_utility = utility;
          } else {
            least_cost = total;
          }
          have_any = true;
        }
      }
    }
  }

  row.utility = row_utility(target, row.return_vector, ds.n_unconstrained);
  return row;
}

}  // namespace

EvaluationResult evaluate_targets(const PolicyBundle& bundle, const CmoMdpSpec& mdp,
                                  const OfflineDataset& ds, const TargetSet& targets,
                                  const EvaluationConfig& cfg, std::uint64_t seed) {
  if (targets.targets.empty()) throw std::invalid_argument("evaluate_targets: empty target set");
  if (cfg.episodes < 1) throw std::invalid_argument("evaluate_targets: episodes must be positive");
  if (cfg.demo_m < 1 || cfg.demo_k < 1)
    throw std::invalid_argument("evaluate_targets: demonstration sizes must be positive");
  if (cfg.workers < 1) throw std::invalid_argument("evaluate_targets: workers must be positive");
  if (ds.augmented)
    throw std::invalid_argument("evaluate_targets: pass the raw dataset; augmentation is internal");
  if (bundle.dim != ds.n_unconstrained + ds.n_constrained)
    throw std::invalid_argument("evaluate_targets: bundle and dataset dimensions disagree");
  if (mdp.n_rewards != ds.n_unconstrained)
    throw std::invalid_argument("evaluate_targets: environment and dataset dimensions disagree");
  if (bundle.n_states < mdp.n_states || bundle.n_actions != mdp.n_actions)
    throw std::invalid_argument("evaluate_targets: bundle does not cover the environment");
  require_labels(ds, "evaluate_targets");

  AdaptationConfig acfg = cfg.adapt;
  acfg.n_unconstrained = ds.n_unconstrained;
  acfg.n_constrained = ds.n_constrained;
  const GaussianPreferenceDistribution prior = fit_preference_prior(ds);
  if (static_cast<int>(prior.dim()) != bundle.dim)
    throw std::invalid_argument("evaluate_targets: label and bundle dimensions disagree");

  TabularStochasticPolicy bc_base;
  if (cfg.method == EvalMethod::bc_finetune)
    bc_base = bc_train(ds, mdp.n_states, mdp.n_actions);

  const std::size_t n = targets.targets.size();
  std::vector<EvaluationRow> rows(n);
  auto run_target = [&](std::size_t i) {
    rows[i] = evaluate_one_target(bundle, mdp, ds, prior, &bc_base, targets.targets[i],
                                  static_cast<int>(i), cfg, acfg, mix_seed(seed, i));
  };

  if (cfg.workers == 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) run_target(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto worker = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (error) return;
        }
        try {
          run_target(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), n);
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }

  EvaluationResult result;
  result.rows = std::move(rows);
  result.summary.method = method_name(cfg.method);
  result.summary.env_id = mdp.env_id;
  result.summary.seed = seed;
  result.summary.overall_average_utility = average_utility(result.rows);

  RewardVector ref =
      cfg.hv_ref.value_or(RewardVector(static_cast<std::size_t>(mdp.n_rewards), 0.0));
  if (static_cast<int>(ref.size()) != mdp.n_rewards)
    throw std::invalid_argument("evaluate_targets: hypervolume reference dimension mismatch");

  for (const EvaluationRow& row : result.rows) {
    GroupSummary* group = nullptr;
    for (GroupSummary& g : result.summary.groups)
      if (same_threshold(g.threshold, row.target.threshold)) {
        group = &g;
        break;
      }
    if (!group) {
      result.summary.groups.push_back(GroupSummary{});
      group = &result.summary.groups.back();
      group->threshold = row.target.threshold;
    }
    ++group->rows;
  }
  for (GroupSummary& g : result.summary.groups) {
    std::vector<RewardVector> returns;
    CostVector max_cost;
    double sum = 0.0;
    int count = 0;
    for (const EvaluationRow& row : result.rows) {
      if (!same_threshold(row.target.threshold, g.threshold)) continue;
      returns.push_back(row.return_vector);
      sum += row.utility;
      ++count;
      if (max_cost.size() < row.cost_return.size()) max_cost.resize(row.cost_return.size(), 0.0);
      for (std::size_t j = 0; j < row.cost_return.size(); ++j)
        max_cost[j] = std::max(max_cost[j], row.cost_return[j]);
    }
    g.average_utility = sum / count;
    g.hypervolume = hypervolume(pareto_filter(returns), ref);
    g.max_cost = std::move(max_cost);
  }
  return result;
}

std::string rows_to_csv(const std::vector<EvaluationRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("rows_to_csv: no rows");
  std::size_t tp = 0, th = 0, ap = 0, rd = 0, cd = 0;
  for (const EvaluationRow& r : rows) {
    if (r.target.preference) tp = std::max(tp, r.target.preference->dim());
    if (r.target.threshold) th = std::max(th, r.target.threshold->size());
    ap = std::max(ap, r.adapted_preference.dim());
    rd = std::max(rd, r.return_vector.size());
    cd = std::max(cd, r.cost_return.size());
  }
  std::ostringstream out;
  out << "target_index,kind";
  for (std::size_t d = 0; d < tp; ++d) out << ",target_pref_" << d;
  for (std::size_t d = 0; d < th; ++d) out << ",threshold_" << d;
  for (std::size_t d = 0; d < ap; ++d) out << ",adapted_pref_" << d;
  for (std::size_t d = 0; d < rd; ++d) out << ",return_" << d;
  for (std::size_t d = 0; d < cd; ++d) out << ",cost_" << d;
  out << ",utility\n";
  for (const EvaluationRow& r : rows) {
    out << r.target_index << ',';
    switch (r.target.kind) {
      case TargetKind::preference: out << "preference"; break;
      case TargetKind::threshold: out << "threshold"; break;
      case TargetKind::both: out << "both"; break;
    }
    for (std::size_t d = 0; d < tp; ++d)
      out << ',' << (r.target.preference && d < r.target.preference->dim()
                         ? fmt((*r.target.preference)[d])
                         : std::string());
    for (std::size_t d = 0; d < th; ++d)
      out << ',' << (r.target.threshold && d < r.target.threshold->size()
                         ? fmt((*r.target.threshold)[d])
                         : std::string());
    for (std::size_t d = 0; d < ap; ++d)
      out << ',' << (d < r.adapted_preference.dim() ? fmt(r.adapted_preference[d]) : std::string());
    for (std::size_t d = 0; d < rd; ++d)
      out << ',' << (d < r.return_vector.size() ? fmt(r.return_vector[d]) : std::string());
    for (std::size_t d = 0; d < cd; ++d)
      out << ',' << (d < r.cost_return.size() ? fmt(r.cost_return[d]) : std::string());
    out << ',' << fmt(r.utility) << '\n';
  }
  return out.str();
}

void write_rows_csv(const std::vector<EvaluationRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_rows_csv: cannot open " + path);
  out << rows_to_csv(rows);
  if (!out) throw std::runtime_error("write_rows_csv: failed writing " + path);
}

std::string summary_to_json(const EvaluationSummary& summary) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["method"] = summary.method;
  j["env_id"] = summary.env_id;
  j["seed"] = summary.seed;
  j["overall_average_utility"] = summary.overall_average_utility;
  nlohmann::ordered_json groups = nlohmann::ordered_json::array();
  for (const GroupSummary& g : summary.groups) {
    nlohmann::ordered_json jg;
    if (g.threshold)
      jg["threshold"] = *g.threshold;
    else
      jg["threshold"] = nullptr;
    jg["rows"] = g.rows;
    jg["average_utility"] = g.average_utility;
    jg["hypervolume"] = g.hypervolume;
    jg["max_cost"] = g.max_cost;
    groups.push_back(std::move(jg));
  }
  j["groups"] = std::move(groups);
  return j.dump();
}

EvaluationSummary summary_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("format_version").get<int>() != 1)
    throw std::invalid_argument("summary_from_json: unsupported format version");
  EvaluationSummary s;
  s.method = j.at("method").get<std::string>();
  s.env_id = j.at("env_id").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.overall_average_utility = j.at("overall_average_utility").get<double>();
  for (const auto& jg : j.at("groups")) {
    GroupSummary g;
    if (!jg.at("threshold").is_null()) g.threshold = jg.at("threshold").get<CostVector>();
    g.rows = jg.at("rows").get<int>();
    g.average_utility = jg.at("average_utility").get<double>();
    g.hypervolume = jg.at("hypervolume").get<double>();
    g.max_cost = jg.at("max_cost").get<CostVector>();
    s.groups.push_back(std::move(g));
  }
  return s;
}

void save_summary(const EvaluationSummary& summary, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_summary: cannot open " + path);
  out << summary_to_json(summary) << '\n';
  if (!out) throw std::runtime_error("save_summary: failed writing " + path);
}

EvaluationSummary load_summary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_summary: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return summary_from_json(buf.str());
}

namespace {

std::string group_label(const std::optional<CostVector>& threshold) {
  if (!threshold) return "all";
  std::string label = "beta=";
  for (std::size_t j = 0; j < threshold->size(); ++j) {
    if (j) label += '|';
    label += fmt6((*threshold)[j]);
  }
  return label;
}

void push_metric(std::vector<ReportRow>& out, const std::string& method, const std::string& group,
                 const std::string& metric, const std::vector<double>& values) {
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  out.push_back(ReportRow{method, group, metric, mean, std::sqrt(var),
                          static_cast<int>(values.size())});
}

}  // namespace

std::vector<ReportRow> aggregate_summaries(const std::vector<EvaluationSummary>& summaries) {
  if (summaries.empty()) throw std::invalid_argument("aggregate_summaries: no summaries");
  std::vector<std::string> methods;
  for (const EvaluationSummary& s : summaries)
    if (std::find(methods.begin(), methods.end(), s.method) == methods.end())
      methods.push_back(s.method);

  std::vector<ReportRow> out;
  for (const std::string& method : methods) {
    std::vector<const EvaluationSummary*> batch;
    for (const EvaluationSummary& s : summaries)
      if (s.method == method) batch.push_back(&s);
    const EvaluationSummary& first = *batch.front();
    for (const EvaluationSummary* s : batch) {
      if (s->groups.size() != first.groups.size())
        throw std::invalid_argument("aggregate_summaries: mismatched target grids");
      for (std::size_t g = 0; g < first.groups.size(); ++g)
        if (!same_threshold(s->groups[g].threshold, first.groups[g].threshold) ||
            s->groups[g].rows != first.groups[g].rows)
          throw std::invalid_argument("aggregate_summaries: mismatched target grids");
    }

    std::vector<double> overall;
    for (const EvaluationSummary* s : batch) overall.push_back(s->overall_average_utility);
    push_metric(out, method, "overall", "average_utility", overall);
    for (std::size_t g = 0; g < first.groups.size(); ++g) {
      const std::string label = group_label(first.groups[g].threshold);
      std::vector<double> au, hv;
      for (const EvaluationSummary* s : batch) {
        au.push_back(s->groups[g].average_utility);
        hv.push_back(s->groups[g].hypervolume);
      }
      push_metric(out, method, label, "average_utility", au);
      push_metric(out, method, label, "hypervolume", hv);
      for (std::size_t j = 0; j < first.groups[g].max_cost.size(); ++j) {
        std::vector<double> mc;
        for (const EvaluationSummary* s : batch) {
          if (s->groups[g].max_cost.size() != first.groups[g].max_cost.size())
            throw std::invalid_argument("aggregate_summaries: mismatched target grids");
          mc.push_back(s->groups[g].max_cost[j]);
        }
        push_metric(out, method, label, "max_cost_" + std::to_string(j), mc);
      }
    }
  }
  return out;
}

std::string report_to_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "method,group,metric,mean,stddev,count\n";
  for (const ReportRow& r : rows)
    out << r.method << ',' << r.group << ',' << r.metric << ',' << fmt(r.mean) << ','
        << fmt(r.stddev) << ',' << r.count << '\n';
  return out.str();
}

}  // namespace pdoa
