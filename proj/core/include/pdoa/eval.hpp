#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdoa/adapt.hpp"
#include "pdoa/baseline.hpp"
#include "pdoa/env.hpp"
#include "pdoa/learner.hpp"
#include "pdoa/types.hpp"

namespace pdoa {

struct TargetSet {
  std::vector<Target> targets;
};

// Evenly spaced two-objective preference targets spanning the dataset's
// behavioral-label support (range of the first label component).
TargetSet preference_targets_from_support(const OfflineDataset& ds, int count);

// Constrained target grid: the preference spread crossed with equidistant
// interior thresholds of the achievable cost range, ordered and grouped by
// threshold. Thresholds are beta_j = c_min + j*(c_max - c_min)/(count+1).
TargetSet constrained_targets_from_support(const OfflineDataset& ds, int preference_count,
                                           int threshold_count = 6);

struct EvaluationRow {
  int target_index = 0;
  Target target;
  PreferenceVector adapted_preference;
  RewardVector return_vector;  // mean over evaluation episodes
  CostVector cost_return;      // mean over evaluation episodes
  double utility = 0.0;        // target preference applied to return_vector
};

enum class EvalMethod { pdoa, oracle, bc_finetune };

struct EvaluationConfig {
  AdaptationConfig adapt;
  int demo_m = 128;
  int demo_k = 2;
  int episodes = 5;
  int workers = 1;
  EvalMethod method = EvalMethod::pdoa;
  std::optional<RewardVector> hv_ref;  // hypervolume reference, zeros by default
};

struct GroupSummary {
  std::optional<CostVector> threshold;
  int rows = 0;
  double average_utility = 0.0;
  double hypervolume = 0.0;
  CostVector max_cost;  // componentwise max of row mean costs; empty when K=0
};

struct EvaluationSummary {
  std::string method;
  std::string env_id;
  std::uint64_t seed = 0;
  double overall_average_utility = 0.0;
  std::vector<GroupSummary> groups;
};

struct EvaluationResult {
  std::vector<EvaluationRow> rows;
  EvaluationSummary summary;
};

// Mean utility over rows, optionally restricted to rows whose target carries
// exactly the given threshold. Throws when nothing remains.
double average_utility(const std::vector<EvaluationRow>& rows,
                       const std::optional<CostVector>& group = std::nullopt);

// Points not weakly dominated by any other; exact duplicates kept once.
std::vector<RewardVector> pareto_filter(const std::vector<RewardVector>& points);

// Exact dominated volume above ref for 1, 2, or 3 objectives; points that do
// not dominate ref are discarded. Higher dimensions are unsupported here; use
// the Monte-Carlo estimator.
double hypervolume(const std::vector<RewardVector>& points, const RewardVector& ref);

// Hit-count estimate of the dominated volume inside the bounding box, any
// dimension. Deterministic under seed.
double hypervolume_monte_carlo(const std::vector<RewardVector>& points, const RewardVector& ref,
                               int n_samples, std::uint64_t seed);

// Full protocol: per target, build demonstrations from the dataset, obtain a
// policy by the configured method (demonstration adaptation, the
// preference-informed oracle, or behavior cloning plus fine-tuning), roll it
// out, and aggregate per threshold group. The dataset must be raw
// (unaugmented) and labeled; constrained pipelines augment internally.
// Deterministic under seed; targets fan out across `workers` threads.
EvaluationResult evaluate_targets(const PolicyBundle& bundle, const CmoMdpSpec& mdp,
                                  const OfflineDataset& ds, const TargetSet& targets,
                                  const EvaluationConfig& cfg, std::uint64_t seed);

// One CSV row per target; stable documented column order.
std::string rows_to_csv(const std::vector<EvaluationRow>& rows);
void write_rows_csv(const std::vector<EvaluationRow>& rows, const std::string& path);

std::string summary_to_json(const EvaluationSummary& summary);
EvaluationSummary summary_from_json(const std::string& text);
void save_summary(const EvaluationSummary& summary, const std::string& path);
EvaluationSummary load_summary(const std::string& path);

// Cross-seed aggregation: one row per (method, group, metric) with mean and
// population standard deviation. Summaries of one method must share an
// identical target grid; otherwise this throws.
struct ReportRow {
  std::string method;
  std::string group;
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;
  int count = 0;
};
std::vector<ReportRow> aggregate_summaries(const std::vector<EvaluationSummary>& summaries);
std::string report_to_csv(const std::vector<ReportRow>& rows);

}  // namespace pdoa
