#pragma once

#include <string>
#include <vector>

#include "rsdpo/optim.hpp"
#include "rsdpo/reward.hpp"
#include "rsdpo/rng.hpp"
#include "rsdpo/toylm.hpp"

namespace rsdpo {

struct DPOConfig {
  double beta = 0.1;
  int epochs = 4;
  int batch_size = 8;
  ScheduleSpec schedule{ScheduleKind::Cosine, 1e-3, 0, 0};
  double holdout_frac = 0.1;
  // Every run trains for the same optimizer-step budget regardless of
  // dataset size (epochs is the paper-shaped knob and acts as a fallback
  // when the budget is 0), so runs compare data value rather than
  // optimization budget.
  long step_budget = 2600;

  void validate() const;
};

struct DPOBatchMetrics {
  double loss = 0.0;
  double reward_accuracy = 0.0;  // ties at margin 0 count 0.5
  double reward_margin = 0.0;
};

struct DPOEpochMetric {
  int epoch = 0;
  std::string split;  // "train" or "holdout"
  DPOBatchMetrics metrics;
};

// beta * (log pi(y|x) - log pi_ref(y|x))
double implicit_reward(const ToyLMParams& policy, const ToyLMParams& ref,
                       const Tokens& prompt, const Tokens& response,
                       double beta);

// -log sigma(implicit_reward(y_w) - implicit_reward(y_l))
double dpo_loss(const ToyLMParams& policy, const ToyLMParams& ref,
                const PreferenceTriple& triple, double beta);

// Exact gradient with respect to the policy parameters; the reference is
// never touched.
std::vector<double> dpo_grad(const ToyLMParams& policy, const ToyLMParams& ref,
                             const PreferenceTriple& triple, double beta);

DPOBatchMetrics reward_accuracy_and_margin(const ToyLMParams& policy,
                                           const ToyLMParams& ref,
                                           const PreferenceDataset& eval,
                                           double beta);

struct DPOResult {
  ToyLMParams policy;
  std::vector<DPOEpochMetric> trace;
};

// Initializes the policy as a copy of the frozen reference and runs Adam on
// the mean DPO loss over shuffled minibatches. The final holdout_frac of the
// shuffled data is held out for per-epoch metrics when it is non-empty.
DPOResult train_dpo(const ToyLMParams& sft_ref, const PreferenceDataset& data,
                    const DPOConfig& cfg, const RngStream& rng);

}  // namespace rsdpo
