#pragma once

#include <optional>
#include <vector>

#include "rsdpo/optim.hpp"
#include "rsdpo/rng.hpp"
#include "rsdpo/vocab.hpp"

namespace rsdpo {

// Scalar-scoring c-gram model R(x, y). The contribution at response position
// t is b_r + sum_i S_i[ctx_i, y_t]; the sequence score is the mean over
// response positions, so magnitude is length-independent.
// Flat layout: S_1..S_c row-major, then the scalar bias b_r.
struct RewardModelParams {
  Vocab vocab;
  int context_len = 3;
  std::vector<double> data;

  static RewardModelParams zeros(const Vocab& vocab, int context_len);

  size_t param_count() const {
    size_t v = static_cast<size_t>(vocab.size);
    return static_cast<size_t>(context_len) * v * v + 1;
  }
  size_t table_offset(int i) const {
    size_t v = static_cast<size_t>(vocab.size);
    return static_cast<size_t>(i) * v * v;
  }
  double& table(int i, int prev, int next) {
    return data[table_offset(i) + static_cast<size_t>(prev) * vocab.size +
                next];
  }
  double table(int i, int prev, int next) const {
    return data[table_offset(i) + static_cast<size_t>(prev) * vocab.size +
                next];
  }
  double& bias() { return data.back(); }
  double bias() const { return data.back(); }

  void validate() const;
};

struct PreferenceTriple {
  Tokens prompt;
  Tokens chosen;    // y_w
  Tokens rejected;  // y_l
  std::optional<double> gap_sigma;
};

using PreferenceDataset = std::vector<PreferenceTriple>;

void check_triple(const Vocab& vocab, const PreferenceTriple& triple);

double reward_score(const RewardModelParams& rm, const Tokens& prompt,
                    const Tokens& response);

// Bradley-Terry preference probability p(w > l) = sigma(r_w - r_l), evaluated
// in the stable logistic form. Complementarity is exact:
// bt_probability(a, b) + bt_probability(b, a) == 1.
double bt_probability(double r_w, double r_l);

// -log sigma(x), stable for large |x|.
double softplus_neg(double x);

struct RMLossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Pairwise logistic loss -log sigma(r(x,y_w) - r(x,y_l)) with its exact
// analytic gradient.
RMLossGrad rm_loss_and_grad(const RewardModelParams& rm,
                            const PreferenceTriple& triple);

// Adds scale * d(loss)/d(params) for one triple into grad; returns the loss.
double accumulate_rm_loss_grad(const RewardModelParams& rm,
                               const PreferenceTriple& triple, double scale,
                               std::vector<double>& grad);

struct RMEpochMetric {
  int epoch = 0;
  double loss = 0.0;
  double pairwise_accuracy = 0.0;
};

struct RMTrainConfig {
  int epochs = 1;
  int batch_size = 16;
  ScheduleSpec schedule;
  // Small preference sets train for extra epochs until this many steps, so a
  // data-poor reward model is still a trained one.
  long min_steps = 150;
};

struct RMResult {
  RewardModelParams params;
  std::vector<RMEpochMetric> trace;
};

RMResult train_rm(const RewardModelParams& init, const PreferenceDataset& data,
                  const RMTrainConfig& cfg, const RngStream& rng);

}  // namespace rsdpo
