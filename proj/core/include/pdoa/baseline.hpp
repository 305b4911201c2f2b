#pragma once

#include <string>
#include <vector>

#include "pdoa/env.hpp"
#include "pdoa/types.hpp"

namespace pdoa {

// Preference-agnostic softmax policy over action logits.
struct TabularStochasticPolicy {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> logits;  // [s][a]

  std::vector<double> distribution(int s) const;
  double logprob(int s, int a) const;
};

// Maximum-likelihood action frequencies with add-one smoothing, as logits.
// Bounds may be 0 to infer from the dataset.
TabularStochasticPolicy bc_train(const OfflineDataset& ds, int n_states = 0, int n_actions = 0);

// Full-batch gradient ascent on the mean demonstration log-likelihood,
// starting from the pretrained logits. Per-component gradients are clipped at
// magnitude 10, so logits stay finite at any step count.
TabularStochasticPolicy bc_finetune(const TabularStochasticPolicy& p,
                                    const DemonstrationSet& demos, double lr = 0.01,
                                    int steps = 1000);

class TabularRolloutPolicy : public RolloutPolicy {
 public:
  explicit TabularRolloutPolicy(const TabularStochasticPolicy& policy) : policy_(&policy) {}
  int act(int t, int state, std::mt19937_64& rng) override;

 private:
  const TabularStochasticPolicy* policy_;
};

// Single-document JSON with a format_version field.
std::string tabular_policy_to_json(const TabularStochasticPolicy& p);
TabularStochasticPolicy tabular_policy_from_json(const std::string& text);
void save_tabular_policy(const TabularStochasticPolicy& p, const std::string& path);
TabularStochasticPolicy load_tabular_policy(const std::string& path);

}  // namespace pdoa
