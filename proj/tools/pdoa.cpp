#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pdoa/core.hpp"
#include "pdoa/dataset_io.hpp"
#include "pdoa/eval.hpp"
#include "pdoa/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Every setting the pipeline uses, with defaults matching the library's.
struct RunConfig {
  std::string env_id = "cmo-grid";
  fs::path output_dir = "pdoa-out";
  fs::path dataset_path;
  fs::path bundle_path;
  std::uint64_t seed = 1;
  int workers = 1;

  double preference_from = 0.5;
  double preference_to = 1.0;
  int preference_count = 6;
  int episodes_per_preference = 20;
  double epsilon = 0.0;
  bool constrained = false;
  std::vector<double> lambda_grid;

  std::string learner_kind = "regularized";
  pdoa::RegularizedConfig regularized;
  pdoa::ReturnConditionedConfig return_conditioned;

  pdoa::AdaptationConfig adapt;
  int demo_m = 128;
  int demo_k = 2;
  int target_preference_count = 11;
  int target_threshold_count = 6;
  int eval_episodes = 5;
  std::string eval_method = "pdoa";
  std::optional<pdoa::RewardVector> hv_ref;
};

void check_keys(const json& j, const char* ctx, std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      throw std::runtime_error("config: unknown key \"" + it.key() + "\" in " + ctx);
  }
}

double parse_temperature(const json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "infinity" || s == "inf") return std::numeric_limits<double>::infinity();
    throw std::runtime_error("config: temperature string must be \"infinity\"");
  }
  return v.get<double>();
}

RunConfig load_run_config(const std::string& config_path) {
  RunConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config file " + config_path);
    const json j = json::parse(in);
    check_keys(j, "top level",
               {"env_id", "output_dir", "dataset", "bundle", "seed", "workers", "data", "learner",
                "adaptation", "demos", "targets", "eval"});
    cfg.env_id = j.value("env_id", cfg.env_id);
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("dataset")) cfg.dataset_path = j.at("dataset").get<std::string>();
    if (j.contains("bundle")) cfg.bundle_path = j.at("bundle").get<std::string>();
    cfg.seed = j.value("seed", cfg.seed);
    cfg.workers = j.value("workers", cfg.workers);

    if (j.contains("data")) {
      const json& d = j.at("data");
      check_keys(d, "data",
                 {"preference_from", "preference_to", "preference_count",
                  "episodes_per_preference", "epsilon", "constrained", "lambda_grid"});
      cfg.preference_from = d.value("preference_from", cfg.preference_from);
      cfg.preference_to = d.value("preference_to", cfg.preference_to);
      cfg.preference_count = d.value("preference_count", cfg.preference_count);
      cfg.episodes_per_preference = d.value("episodes_per_preference", cfg.episodes_per_preference);
      cfg.epsilon = d.value("epsilon", cfg.epsilon);
      cfg.constrained = d.value("constrained", cfg.constrained);
      if (d.contains("lambda_grid")) cfg.lambda_grid = d.at("lambda_grid").get<std::vector<double>>();
    }
    if (j.contains("learner")) {
      const json& l = j.at("learner");
      check_keys(l, "learner",
                 {"kind", "grid", "bandwidth", "temperature", "sweeps", "gamma", "bandwidth_g",
                  "bandwidth_w", "smoothing", "filter_tolerance"});
      cfg.learner_kind = l.value("kind", cfg.learner_kind);
      cfg.regularized.grid = l.value("grid", cfg.regularized.grid);
      cfg.regularized.bandwidth = l.value("bandwidth", cfg.regularized.bandwidth);
      if (l.contains("temperature"))
        cfg.regularized.temperature = parse_temperature(l.at("temperature"));
      cfg.regularized.sweeps = l.value("sweeps", cfg.regularized.sweeps);
      cfg.regularized.gamma = l.value("gamma", cfg.regularized.gamma);
      cfg.return_conditioned.bandwidth_g = l.value("bandwidth_g", cfg.return_conditioned.bandwidth_g);
      cfg.return_conditioned.bandwidth_w = l.value("bandwidth_w", cfg.return_conditioned.bandwidth_w);
      cfg.return_conditioned.smoothing = l.value("smoothing", cfg.return_conditioned.smoothing);
      cfg.return_conditioned.filter_tolerance =
          l.value("filter_tolerance", cfg.return_conditioned.filter_tolerance);
      cfg.return_conditioned.gamma = l.value("gamma", cfg.return_conditioned.gamma);
    }
    if (j.contains("adaptation")) {
      const json& a = j.at("adaptation");
      check_keys(a, "adaptation", {"steps", "samples", "step_size", "eta", "delta", "alpha"});
      cfg.adapt.steps = a.value("steps", cfg.adapt.steps);
      cfg.adapt.samples_per_step = a.value("samples", cfg.adapt.samples_per_step);
      cfg.adapt.step_size = a.value("step_size", cfg.adapt.step_size);
      cfg.adapt.eta = a.value("eta", cfg.adapt.eta);
      cfg.adapt.delta = a.value("delta", cfg.adapt.delta);
      cfg.adapt.alpha = a.value("alpha", cfg.adapt.alpha);
    }
    if (j.contains("demos")) {
      const json& d = j.at("demos");
      check_keys(d, "demos", {"M", "K"});
      cfg.demo_m = d.value("M", cfg.demo_m);
      cfg.demo_k = d.value("K", cfg.demo_k);
    }
    if (j.contains("targets")) {
      const json& t = j.at("targets");
      check_keys(t, "targets", {"preference_count", "threshold_count"});
      cfg.target_preference_count = t.value("preference_count", cfg.target_preference_count);
      cfg.target_threshold_count = t.value("threshold_count", cfg.target_threshold_count);
    }
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      check_keys(e, "eval", {"episodes", "method", "hv_ref"});
      cfg.eval_episodes = e.value("episodes", cfg.eval_episodes);
      cfg.eval_method = e.value("method", cfg.eval_method);
      if (e.contains("hv_ref") && !e.at("hv_ref").is_null())
        cfg.hv_ref = e.at("hv_ref").get<pdoa::RewardVector>();
    }
  }
  if (const char* out = std::getenv("PDOA_OUT"); out && *out) cfg.output_dir = out;
  if (cfg.dataset_path.empty()) cfg.dataset_path = cfg.output_dir / "dataset.jsonl";
  if (cfg.bundle_path.empty()) cfg.bundle_path = cfg.output_dir / "bundle.json";
  return cfg;
}

void ensure_output_dir(const RunConfig& cfg) { fs::create_directories(cfg.output_dir); }

pdoa::TargetSet make_targets(const RunConfig& cfg, const pdoa::OfflineDataset& ds) {
  if (ds.n_constrained > 0)
    return pdoa::constrained_targets_from_support(ds, cfg.target_preference_count,
                                                  cfg.target_threshold_count);
  return pdoa::preference_targets_from_support(ds, cfg.target_preference_count);
}

pdoa::AdaptationConfig adaptation_for(const RunConfig& cfg, const pdoa::OfflineDataset& ds) {
  pdoa::AdaptationConfig acfg = cfg.adapt;
  acfg.n_unconstrained = ds.n_unconstrained;
  acfg.n_constrained = ds.n_constrained;
  return acfg;
}

int cmd_gen_data(const RunConfig& cfg) {
  ensure_output_dir(cfg);
  const pdoa::CmoMdpSpec mdp = pdoa::make_env(cfg.env_id);
  pdoa::BehaviorPolicySet behaviors;
  behaviors.preferences =
      pdoa::preference_range(cfg.preference_from, cfg.preference_to, cfg.preference_count);
  behaviors.epsilon = cfg.epsilon;
  if (cfg.constrained)
    behaviors.lambda_grid = cfg.lambda_grid.empty() ? pdoa::default_lambda_grid() : cfg.lambda_grid;

  const pdoa::OfflineDataset ds =
      pdoa::generate_dataset(mdp, behaviors, cfg.episodes_per_preference, cfg.seed);
  pdoa::write_dataset_file(ds, cfg.dataset_path.string());

  std::size_t n_transitions = 0;
  for (const pdoa::Trajectory& t : ds.trajectories) n_transitions += t.transitions.size();
  json manifest;
  manifest["format_version"] = 1;
  manifest["env_id"] = ds.env_id;
  manifest["seed"] = cfg.seed;
  manifest["n_behavior_preferences"] = behaviors.preferences.size();
  manifest["lambda_grid"] = behaviors.lambda_grid;
  manifest["episodes_per_preference"] = cfg.episodes_per_preference;
  manifest["epsilon"] = cfg.epsilon;
  manifest["n_trajectories"] = ds.trajectories.size();
  manifest["n_transitions"] = n_transitions;
  manifest["n_unconstrained"] = ds.n_unconstrained;
  manifest["n_constrained"] = ds.n_constrained;
  const fs::path manifest_path = cfg.output_dir / "manifest.json";
  {
    std::ofstream out(manifest_path);
    if (!out) throw std::runtime_error("cannot write " + manifest_path.string());
    out << manifest.dump(2) << '\n';
  }

  const pdoa::OfflineDataset reread = pdoa::read_dataset_file(cfg.dataset_path.string());
  if (reread.trajectories.size() != ds.trajectories.size() || reread.env_id != ds.env_id)
    throw std::runtime_error("dataset failed post-write validation");
  for (const pdoa::Trajectory& t : reread.trajectories)
    if (!t.behavioral_preference) throw std::runtime_error("dataset lost behavioral labels");

  std::cout << "wrote " << cfg.dataset_path.string() << " (" << ds.trajectories.size()
            << " trajectories, " << n_transitions << " transitions)\n"
            << "wrote " << manifest_path.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  ensure_output_dir(cfg);
  pdoa::OfflineDataset ds = pdoa::read_dataset_file(cfg.dataset_path.string());
  // Constrained data trains on the augmented view: costs folded into rewards
  // with flipped sign, so the learner sees a single vector objective.
  if (ds.n_constrained > 0) ds = pdoa::augment_dataset(ds);
  // Train over the environment's full state space, not just the visited part,
  // so the bundle can act anywhere a later rollout lands.
  const pdoa::CmoMdpSpec mdp = pdoa::make_env(ds.env_id);
  pdoa::PolicyBundle bundle;
  if (cfg.learner_kind == "regularized") {
    pdoa::RegularizedConfig rcfg = cfg.regularized;
    rcfg.n_states = mdp.n_states;
    rcfg.n_actions = mdp.n_actions;
    bundle = pdoa::train_regularized(ds, rcfg);
  } else if (cfg.learner_kind == "return_conditioned") {
    pdoa::ReturnConditionedConfig ccfg = cfg.return_conditioned;
    ccfg.n_states = mdp.n_states;
    ccfg.n_actions = mdp.n_actions;
    bundle = pdoa::train_return_conditioned(ds, ccfg);
  } else {
    throw std::runtime_error("config: learner kind must be regularized or return_conditioned");
  }
  pdoa::save_bundle(bundle, cfg.bundle_path.string());

  const pdoa::PolicyBundle reread = pdoa::load_bundle(cfg.bundle_path.string());
  if (reread.kind != bundle.kind || reread.dim != bundle.dim ||
      reread.n_states != bundle.n_states || reread.env_id != bundle.env_id)
    throw std::runtime_error("bundle failed post-write validation");
  const pdoa::PreferenceVector probe =
      pdoa::normalize_preference(std::vector<double>(static_cast<std::size_t>(bundle.dim), 1.0));
  const std::vector<double> dist = pdoa::policy_distribution(reread, 0, probe, std::nullopt);
  double total = 0.0;
  for (double p : dist) total += p;
  if (std::abs(total - 1.0) > 1e-9)
    throw std::runtime_error("bundle failed post-write validation");

  std::cout << "wrote " << cfg.bundle_path.string() << " (" << cfg.learner_kind << ", dim "
            << bundle.dim << ", " << bundle.n_states << " states)\n";
  return 0;
}

void write_target_columns(std::ostream& out, const pdoa::Target& t, int pref_dim, int cost_dim) {
  switch (t.kind) {
    case pdoa::TargetKind::preference: out << "preference"; break;
    case pdoa::TargetKind::threshold: out << "threshold"; break;
    case pdoa::TargetKind::both: out << "both"; break;
  }
  for (int d = 0; d < pref_dim; ++d)
    out << ',' << (t.preference ? fmt((*t.preference)[static_cast<std::size_t>(d)]) : std::string());
  for (int d = 0; d < cost_dim; ++d)
    out << ',' << (t.threshold ? fmt((*t.threshold)[static_cast<std::size_t>(d)]) : std::string());
}

int cmd_adapt(const RunConfig& cfg, bool trace) {
  ensure_output_dir(cfg);
  const pdoa::OfflineDataset ds = pdoa::read_dataset_file(cfg.dataset_path.string());
  const pdoa::PolicyBundle bundle = pdoa::load_bundle(cfg.bundle_path.string());
  if (ds.env_id != bundle.env_id)
    throw std::runtime_error("dataset and bundle come from different environments");

  const pdoa::TargetSet targets = make_targets(cfg, ds);
  const pdoa::GaussianPreferenceDistribution prior = pdoa::fit_preference_prior(ds);
  const pdoa::AdaptationConfig acfg = adaptation_for(cfg, ds);
  const int dim = bundle.dim;

  const fs::path adapted_path = cfg.output_dir / "adapted.csv";
  std::ostringstream body;
  body << "target_index,kind";
  for (int d = 0; d < ds.n_unconstrained; ++d) body << ",target_pref_" << d;
  for (int d = 0; d < ds.n_constrained; ++d) body << ",threshold_" << d;
  for (int d = 0; d < dim; ++d) body << ",adapted_pref_" << d;
  for (int d = 0; d < dim; ++d) body << ",posterior_mean_" << d;
  for (int d = 0; d < dim; ++d) body << ",posterior_sigma_" << d;
  body << '\n';

  std::ofstream trace_out;
  const fs::path trace_path = cfg.output_dir / "trace.csv";
  if (trace) {
    trace_out.open(trace_path);
    if (!trace_out) throw std::runtime_error("cannot write " + trace_path.string());
    trace_out << "target_index,step,objective";
    for (int d = 0; d < dim; ++d) trace_out << ",mean_" << d;
    for (int d = 0; d < dim; ++d) trace_out << ",sigma_" << d;
    trace_out << '\n';
  }

  for (std::size_t i = 0; i < targets.targets.size(); ++i) {
    const std::uint64_t tseed = pdoa::mix_seed(cfg.seed, i);
    pdoa::DemonstrationSet demos =
        pdoa::build_demo_set(ds, targets.targets[i], cfg.demo_m, cfg.demo_k,
                             pdoa::mix_seed(tseed, 1));
    if (ds.n_constrained > 0)
      for (pdoa::Transition& tr : demos.transitions) tr = pdoa::augment_transition(tr);

    pdoa::TraceCallback cb;
    if (trace)
      cb = [&](int step, double objective, const std::vector<double>& mean,
               const std::vector<double>& sigma) {
        trace_out << i << ',' << step << ',' << fmt(objective);
        for (double m : mean) trace_out << ',' << fmt(m);
        for (double s : sigma) trace_out << ',' << fmt(s);
        trace_out << '\n';
      };
    const pdoa::PdoaResult res =
        pdoa::pdoa(bundle, demos, prior, acfg, pdoa::mix_seed(tseed, 2), cb);

    body << i << ',';
    write_target_columns(body, targets.targets[i], ds.n_unconstrained, ds.n_constrained);
    for (int d = 0; d < dim; ++d) body << ',' << fmt(res.adapted_preference[static_cast<std::size_t>(d)]);
    for (int d = 0; d < dim; ++d) body << ',' << fmt(res.posterior.mean[static_cast<std::size_t>(d)]);
    for (int d = 0; d < dim; ++d) body << ',' << fmt(res.posterior.stddev[static_cast<std::size_t>(d)]);
    body << '\n';
  }

  {
    std::ofstream out(adapted_path);
    if (!out) throw std::runtime_error("cannot write " + adapted_path.string());
    out << body.str();
  }
  if (trace && !trace_out) throw std::runtime_error("failed writing " + trace_path.string());
  if (trace) trace_out.close();

  std::ifstream check(adapted_path);
  std::size_t lines = 0;
  for (std::string line; std::getline(check, line);) ++lines;
  if (lines != targets.targets.size() + 1)
    throw std::runtime_error("adapted preferences failed post-write validation");

  std::cout << "wrote " << adapted_path.string() << " (" << targets.targets.size()
            << " targets)\n";
  if (trace) std::cout << "wrote " << trace_path.string() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, bool oracle) {
  ensure_output_dir(cfg);
  const pdoa::OfflineDataset ds = pdoa::read_dataset_file(cfg.dataset_path.string());
  const pdoa::PolicyBundle bundle = pdoa::load_bundle(cfg.bundle_path.string());
  if (ds.env_id != bundle.env_id)
    throw std::runtime_error("dataset and bundle come from different environments");
  const pdoa::CmoMdpSpec mdp = pdoa::make_env(ds.env_id);
  const pdoa::TargetSet targets = make_targets(cfg, ds);

  pdoa::EvaluationConfig ecfg;
  ecfg.adapt = cfg.adapt;
  ecfg.demo_m = cfg.demo_m;
  ecfg.demo_k = cfg.demo_k;
  ecfg.episodes = cfg.eval_episodes;
  ecfg.workers = cfg.workers;
  ecfg.hv_ref = cfg.hv_ref;
  std::string method = oracle ? "oracle" : cfg.eval_method;
  if (method == "pdoa")
    ecfg.method = pdoa::EvalMethod::pdoa;
  else if (method == "oracle")
    ecfg.method = pdoa::EvalMethod::oracle;
  else if (method == "bc_finetune")
    ecfg.method = pdoa::EvalMethod::bc_finetune;
  else
    throw std::runtime_error("config: eval method must be pdoa, oracle, or bc_finetune");

  const pdoa::EvaluationResult result =
      pdoa::evaluate_targets(bundle, mdp, ds, targets, ecfg, cfg.seed);

  const std::string tag = method + "_seed" + std::to_string(cfg.seed);
  const fs::path rows_path = cfg.output_dir / ("rows_" + tag + ".csv");
  const fs::path summary_path = cfg.output_dir / ("summary_" + tag + ".json");
  pdoa::write_rows_csv(result.rows, rows_path.string());
  pdoa::save_summary(result.summary, summary_path.string());

  const pdoa::EvaluationSummary reread = pdoa::load_summary(summary_path.string());
  if (reread.method != result.summary.method || reread.seed != result.summary.seed ||
      reread.overall_average_utility != result.summary.overall_average_utility ||
      reread.groups.size() != result.summary.groups.size())
    throw std::runtime_error("summary failed post-write validation");
  std::ifstream check(rows_path);
  std::size_t lines = 0;
  for (std::string line; std::getline(check, line);) ++lines;
  if (lines != result.rows.size() + 1)
    throw std::runtime_error("evaluation rows failed post-write validation");

  std::cout << "wrote " << rows_path.string() << " (" << result.rows.size() << " rows)\n"
            << "wrote " << summary_path.string() << "\n"
            << "method=" << reread.method
            << " overall_average_utility=" << fmt(reread.overall_average_utility)
            << " groups=" << reread.groups.size() << "\n";
  return 0;
}

int cmd_report(const RunConfig& cfg, const std::vector<std::string>& summary_paths) {
  ensure_output_dir(cfg);
  std::vector<pdoa::EvaluationSummary> summaries;
  summaries.reserve(summary_paths.size());
  for (const std::string& path : summary_paths) summaries.push_back(pdoa::load_summary(path));
  const std::vector<pdoa::ReportRow> rows = pdoa::aggregate_summaries(summaries);
  const std::string csv = pdoa::report_to_csv(rows);

  const fs::path report_path = cfg.output_dir / "report.csv";
  {
    std::ofstream out(report_path);
    if (!out) throw std::runtime_error("cannot write " + report_path.string());
    out << csv;
  }
  std::ifstream in(report_path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (buf.str() != csv) throw std::runtime_error("report failed post-write validation");

  std::cout << csv;
  std::cout << "wrote " << report_path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline preference-distribution adaptation pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed_override = 0;
  int workers_override = 0;
  bool trace = false;
  bool oracle = false;
  std::vector<std::string> summary_paths;

  CLI::App* gen = app.add_subcommand("gen-data", "Generate an offline dataset and manifest");
  gen->add_option("--config", config_path, "JSON run configuration");
  CLI::Option* gen_seed = gen->add_option("--seed", seed_override, "Override config seed");

  CLI::App* train = app.add_subcommand("train", "Train a policy bundle from a dataset");
  train->add_option("--config", config_path, "JSON run configuration");

  CLI::App* adapt = app.add_subcommand("adapt", "Adapt preferences to demonstration targets");
  adapt->add_option("--config", config_path, "JSON run configuration");
  CLI::Option* adapt_seed = adapt->add_option("--seed", seed_override, "Override config seed");
  adapt->add_flag("--trace", trace, "Write per-step optimization trace CSV");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate adapted policies against targets");
  eval->add_option("--config", config_path, "JSON run configuration");
  CLI::Option* eval_seed = eval->add_option("--seed", seed_override, "Override config seed");
  CLI::Option* eval_workers =
      eval->add_option("--workers", workers_override, "Parallel target workers");
  eval->add_flag("--oracle", oracle, "Query the bundle at the true preferences instead of adapting");

  CLI::App* report = app.add_subcommand("report", "Aggregate evaluation summaries across seeds");
  report->add_option("--config", config_path, "JSON run configuration (for the output directory)");
  report->add_option("summaries", summary_paths, "Summary JSON files")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_run_config(config_path);
    if (gen_seed->count() || adapt_seed->count() || eval_seed->count()) cfg.seed = seed_override;
    if (eval_workers->count()) cfg.workers = workers_override;

    if (gen->parsed()) return cmd_gen_data(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (adapt->parsed()) return cmd_adapt(cfg, trace);
    if (eval->parsed()) return cmd_eval(cfg, oracle);
    if (report->parsed()) return cmd_report(cfg, summary_paths);
    throw std::runtime_error("no subcommand selected");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
