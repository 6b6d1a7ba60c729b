#include "rsdpo/dpo.hpp"

#include <cmath>
#include <stdexcept>

namespace rsdpo {

void DPOConfig::validate() const {
  if (!(beta > 0.0)) throw std::invalid_argument("DPOConfig: beta > 0");
  if (epochs < 0) throw std::invalid_argument("DPOConfig: epochs >= 0");
  if (batch_size < 1) throw std::invalid_argument("DPOConfig: batch_size >= 1");
  if (!(holdout_frac >= 0.0 && holdout_frac < 1.0)) {
    throw std::invalid_argument("DPOConfig: holdout_frac in [0, 1)");
  }
  if (step_budget < 0) {
    throw std::invalid_argument("DPOConfig: step_budget >= 0");
  }
}

double implicit_reward(const ToyLMParams& policy, const ToyLMParams& ref,
                       const Tokens& prompt, const Tokens& response,
                       double beta) {
  return beta * (sequence_logprob(policy, prompt, response) -
                 sequence_logprob(ref, prompt, response));
}

namespace {

double dpo_margin(const ToyLMParams& policy, const ToyLMParams& ref,
                  const PreferenceTriple& t, double beta) {
  return implicit_reward(policy, ref, t.prompt, t.chosen, beta) -
         implicit_reward(policy, ref, t.prompt, t.rejected, beta);
}

// Margin when the reference logprobs for the triple are precomputed.
double dpo_margin_cached(const ToyLMParams& policy, const PreferenceTriple& t,
                         double beta, double ref_lp_w, double ref_lp_l) {
  double lp_w = sequence_logprob(policy, t.prompt, t.chosen);
  double lp_l = sequence_logprob(policy, t.prompt, t.rejected);
  return beta * ((lp_w - ref_lp_w) - (lp_l - ref_lp_l));
}

// Adds scale * dL/dtheta for one triple into grad; returns the loss.
double accumulate_dpo_grad(const ToyLMParams& policy,
                           const PreferenceTriple& t, double beta,
                           double ref_lp_w, double ref_lp_l, double scale,
                           std::vector<double>& grad) {
  double margin = dpo_margin_cached(policy, t, beta, ref_lp_w, ref_lp_l);
  // dL/dmargin = -sigma(-margin); chain through beta * (grad_w - grad_l).
  double coeff = -bt_probability(0.0, margin) * beta * scale;
  accumulate_logprob_grad(policy, t.prompt, t.chosen, coeff, grad);
  accumulate_logprob_grad(policy, t.prompt, t.rejected, -coeff, grad);
  return softplus_neg(margin);
}

}  // namespace

double dpo_loss(const ToyLMParams& policy, const ToyLMParams& ref,
                const PreferenceTriple& triple, double beta) {
  check_triple(policy.vocab, triple);
  return softplus_neg(dpo_margin(policy, ref, triple, beta));
}

std::vector<double> dpo_grad(const ToyLMParams& policy, const ToyLMParams& ref,
                             const PreferenceTriple& triple, double beta) {
  check_triple(policy.vocab, triple);
  std::vector<double> grad(policy.param_count(), 0.0);
  double ref_lp_w = sequence_logprob(ref, triple.prompt, triple.chosen);
  double ref_lp_l = sequence_logprob(ref, triple.prompt, triple.rejected);
  accumulate_dpo_grad(policy, triple, beta, ref_lp_w, ref_lp_l, 1.0, grad);
  return grad;
}

DPOBatchMetrics reward_accuracy_and_margin(const ToyLMParams& policy,
                                           const ToyLMParams& ref,
                                           const PreferenceDataset& eval,
                                           double beta) {
  if (eval.empty()) {
    throw std::invalid_argument("reward_accuracy_and_margin: empty eval set");
  }
  DPOBatchMetrics m;
  for (const auto& t : eval) {
    double margin = dpo_margin(policy, ref, t, beta);
    m.reward_margin += margin;
    m.loss += softplus_neg(margin);
    if (margin > 0.0) {
      m.reward_accuracy += 1.0;
    } else if (margin == 0.0) {
      m.reward_accuracy += 0.5;
    }
  }
  double n = static_cast<double>(eval.size());
  m.reward_margin /= n;
  m.loss /= n;
  m.reward_accuracy /= n;
  return m;
}

DPOResult train_dpo(const ToyLMParams& sft_ref, const PreferenceDataset& data,
                    const DPOConfig& cfg, const RngStream& rng) {
  sft_ref.validate();
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train_dpo: empty dataset");
  for (const auto& t : data) check_triple(sft_ref.vocab, t);

  DPOResult result{sft_ref, {}};
  if (cfg.epochs == 0) return result;

  // One shuffle fixes the split; the tail is the holdout.
  std::vector<size_t> order = shuffled_indices(data.size(), rng.child(0));
  size_t holdout_n = static_cast<size_t>(
      std::floor(cfg.holdout_frac * static_cast<double>(data.size())));
  size_t train_n = data.size() - holdout_n;
  if (train_n == 0) {
    throw std::invalid_argument("train_dpo: holdout leaves no training data");
  }
  PreferenceDataset train(train_n), holdout(holdout_n);
  for (size_t i = 0; i < train_n; ++i) train[i] = data[order[i]];
  for (size_t i = 0; i < holdout_n; ++i) {
    holdout[i] = data[order[train_n + i]];
  }

  // The reference is frozen, so its logprobs are computed once.
  std::vector<double> ref_lp_w(train_n), ref_lp_l(train_n);
  for (size_t i = 0; i < train_n; ++i) {
    ref_lp_w[i] = sequence_logprob(sft_ref, train[i].prompt, train[i].chosen);
    ref_lp_l[i] =
        sequence_logprob(sft_ref, train[i].prompt, train[i].rejected);
  }

  long batches_per_epoch =
      static_cast<long>((train_n + cfg.batch_size - 1) / cfg.batch_size);
  long total_steps = cfg.step_budget > 0
                         ? cfg.step_budget
                         : batches_per_epoch * cfg.epochs;
  ScheduleSpec schedule = cfg.schedule;
  if (schedule.total_steps == 0) {
    schedule.total_steps = total_steps;
  }

  AdamState adam = AdamState::zeros(sft_ref.param_count());
  std::vector<double> grad(sft_ref.param_count());
  long step = 0;
  for (int epoch = 0; step < total_steps; ++epoch) {
    std::vector<size_t> perm = shuffled_indices(train_n, rng.child(epoch + 1));
    for (size_t start = 0; start < train_n && step < total_steps;
         start += cfg.batch_size) {
      size_t end = std::min(train_n, start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      double inv = 1.0 / static_cast<double>(end - start);
      for (size_t b = start; b < end; ++b) {
        size_t i = perm[b];
        accumulate_dpo_grad(result.policy, train[i], cfg.beta, ref_lp_w[i],
                            ref_lp_l[i], inv, grad);
      }
      adam_step(result.policy.data, grad, adam, lr_at(schedule, step));
      ++step;
    }
    result.trace.push_back(
        {epoch, "train",
         reward_accuracy_and_margin(result.policy, sft_ref, train, cfg.beta)});
    if (!holdout.empty()) {
      result.trace.push_back({epoch, "holdout",
                              reward_accuracy_and_margin(result.policy,
                                                         sft_ref, holdout,
                                                         cfg.beta)});
    }
  }
  return result;
}

}  // namespace rsdpo
