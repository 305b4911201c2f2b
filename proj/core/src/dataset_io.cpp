#include "pdoa/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace pdoa {

namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

ordered transition_to_json(const Transition& tr) {
  ordered j;
  j["s"] = tr.state;
  j["a"] = tr.action;
  j["s2"] = tr.next_state;
  j["r"] = tr.reward;
  j["c"] = tr.cost;
  return j;
}

Transition transition_from_json(const json& j) {
  Transition tr;
  tr.state = j.at("s").get<int>();
  tr.action = j.at("a").get<int>();
  tr.next_state = j.at("s2").get<int>();
  tr.reward = j.at("r").get<RewardVector>();
  tr.cost = j.at("c").get<CostVector>();
  return tr;
}

}  // namespace

void write_dataset(const OfflineDataset& ds, std::ostream& out) {
  ordered header;
  header["n_unconstrained"] = ds.n_unconstrained;
  header["n_constrained"] = ds.n_constrained;
  header["augmented"] = ds.augmented;
  header["env_id"] = ds.env_id;
  out << header.dump() << '\n';
  for (const Trajectory& traj : ds.trajectories) {
    ordered line;
    ordered transitions = ordered::array();
    for (const Transition& tr : traj.transitions) transitions.push_back(transition_to_json(tr));
    line["transitions"] = std::move(transitions);
    if (traj.behavioral_preference.has_value())
      line["pref"] = traj.behavioral_preference->weights;
    out << line.dump() << '\n';
  }
}

OfflineDataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("read_dataset: missing header line");
  json header = json::parse(line);
  OfflineDataset ds;
  ds.n_unconstrained = header.at("n_unconstrained").get<int>();
  ds.n_constrained = header.at("n_constrained").get<int>();
  ds.augmented = header.at("augmented").get<bool>();
  ds.env_id = header.at("env_id").get<std::string>();
  if (ds.n_unconstrained < 0 || ds.n_constrained < 0)
    throw std::runtime_error("read_dataset: negative objective counts in header");
  if (ds.augmented && ds.n_constrained != 0)
    throw std::runtime_error("read_dataset: augmented dataset must have no cost objectives");

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    std::vector<Transition> transitions;
    for (const json& t : j.at("transitions")) {
      Transition tr = transition_from_json(t);
      if (static_cast<int>(tr.reward.size()) != ds.n_unconstrained ||
          static_cast<int>(tr.cost.size()) != ds.n_constrained)
        throw std::runtime_error("read_dataset: transition objective dimensions disagree with header");
      for (double c : tr.cost)
        if (c < 0.0) throw std::runtime_error("read_dataset: negative cost component");
      transitions.push_back(std::move(tr));
    }
    Trajectory traj = make_trajectory(std::move(transitions));
    if (j.contains("pref")) {
      PreferenceVector pref{j.at("pref").get<std::vector<double>>()};
      if (!is_normalized_preference(pref))
        throw std::runtime_error("read_dataset: trajectory preference is not on the simplex");
      traj.behavioral_preference = pref;
      for (Transition& tr : traj.transitions) tr.behavioral_preference = pref;
    }
    ds.trajectories.push_back(std::move(traj));
  }
  return ds;
}

void write_dataset_file(const OfflineDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dataset_file: cannot open " + path);
  write_dataset(ds, out);
  if (!out) throw std::runtime_error("write_dataset_file: failed writing " + path);
}

OfflineDataset read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_dataset_file: cannot open " + path);
  return read_dataset(in);
}

std::string dataset_to_string(const OfflineDataset& ds) {
  std::ostringstream out;
  write_dataset(ds, out);
  return out.str();
}

OfflineDataset dataset_from_string(const std::string& text) {
  std::istringstream in(text);
  return read_dataset(in);
}

}  // namespace pdoa
