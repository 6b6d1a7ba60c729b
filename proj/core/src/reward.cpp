#include "rsdpo/reward.hpp"

#include <cmath>
#include <stdexcept>

namespace rsdpo {

RewardModelParams RewardModelParams::zeros(const Vocab& vocab,
                                           int context_len) {
  vocab.validate();
  if (context_len < 1) {
    throw std::invalid_argument(
        "RewardModelParams: context_len must be positive");
  }
  RewardModelParams p;
  p.vocab = vocab;
  p.context_len = context_len;
  p.data.assign(p.param_count(), 0.0);
  return p;
}

void RewardModelParams::validate() const {
  vocab.validate();
  if (context_len < 1) {
    throw std::invalid_argument(
        "RewardModelParams: context_len must be positive");
  }
  if (data.size() != param_count()) {
    throw std::invalid_argument("RewardModelParams: parameter count mismatch");
  }
  for (double x : data) {
    if (!std::isfinite(x)) {
      throw std::invalid_argument("RewardModelParams: non-finite parameter");
    }
  }
}

void check_triple(const Vocab& vocab, const PreferenceTriple& triple) {
  check_prompt(vocab, triple.prompt);
  check_nonempty_response(vocab, triple.chosen);
  check_nonempty_response(vocab, triple.rejected);
  if (triple.chosen == triple.rejected) {
    throw std::invalid_argument(
        "PreferenceTriple: chosen and rejected must differ");
  }
  if (triple.gap_sigma &&
      !(*triple.gap_sigma > 0.0 && *triple.gap_sigma < 1.0)) {
    throw std::invalid_argument("PreferenceTriple: gap_sigma outside (0, 1)");
  }
}

namespace {

// Adds scale/len(response) to every parameter cell touched by (x, y); this is
// the gradient of reward_score with respect to the parameters.
void accumulate_score_grad(const RewardModelParams& rm, const Tokens& prompt,
                           const Tokens& response, double scale,
                           std::vector<double>& grad) {
  const int v = rm.vocab.size;
  double per_pos = scale / static_cast<double>(response.size());
  std::vector<int> ctx(rm.context_len);
  for (size_t t = 0; t < response.size(); ++t) {
    ngram_context(prompt, response, t, rm.context_len, ctx.data());
    for (int i = 0; i < rm.context_len; ++i) {
      grad[rm.table_offset(i) + static_cast<size_t>(ctx[i]) * v +
           response[t]] += per_pos;
    }
    grad.back() += per_pos;
  }
}

}  // namespace

double reward_score(const RewardModelParams& rm, const Tokens& prompt,
                    const Tokens& response) {
  check_tokens_in_range(rm.vocab, prompt, "prompt");
  check_nonempty_response(rm.vocab, response);
  std::vector<int> ctx(rm.context_len);
  double total = 0.0;
  for (size_t t = 0; t < response.size(); ++t) {
    ngram_context(prompt, response, t, rm.context_len, ctx.data());
    double contrib = rm.bias();
    for (int i = 0; i < rm.context_len; ++i) {
      contrib += rm.table(i, ctx[i], response[t]);
    }
    total += contrib;
  }
  return total / static_cast<double>(response.size());
}

double bt_probability(double r_w, double r_l) {
  double delta = r_w - r_l;
  if (delta >= 0.0) {
    return 1.0 / (1.0 + std::exp(-delta));
  }
  // 1 - sigma(-delta); exact complement since sigma(-delta) is in [0.5, 1].
  return 1.0 - 1.0 / (1.0 + std::exp(delta));
}

double softplus_neg(double x) {
  // -log sigma(x) = log(1 + exp(-x))
  if (x > 0.0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

double accumulate_rm_loss_grad(const RewardModelParams& rm,
                               const PreferenceTriple& triple, double scale,
                               std::vector<double>& grad) {
  check_triple(rm.vocab, triple);
  if (grad.size() != rm.param_count()) {
    throw std::invalid_argument("accumulate_rm_loss_grad: shape mismatch");
  }
  double r_w = reward_score(rm, triple.prompt, triple.chosen);
  double r_l = reward_score(rm, triple.prompt, triple.rejected);
  double delta = r_w - r_l;
  // dL/ddelta = -sigma(-delta)
  double coeff = -bt_probability(r_l, r_w) * scale;
  accumulate_score_grad(rm, triple.prompt, triple.chosen, coeff, grad);
  accumulate_score_grad(rm, triple.prompt, triple.rejected, -coeff, grad);
  return softplus_neg(delta);
}

RMLossGrad rm_loss_and_grad(const RewardModelParams& rm,
                            const PreferenceTriple& triple) {
  RMLossGrad out;
  out.grad.assign(rm.param_count(), 0.0);
  out.loss = accumulate_rm_loss_grad(rm, triple, 1.0, out.grad);
  return out;
}

RMResult train_rm(const RewardModelParams& init, const PreferenceDataset& data,
                  const RMTrainConfig& cfg, const RngStream& rng) {
  init.validate();
  if (data.empty()) throw std::invalid_argument("train_rm: empty dataset");
  if (cfg.epochs < 0) throw std::invalid_argument("train_rm: epochs >= 0");
  if (cfg.batch_size < 1) {
    throw std::invalid_argument("train_rm: batch_size >= 1");
  }
  for (const auto& t : data) check_triple(init.vocab, t);

  RMResult result{init, {}};
  if (cfg.epochs == 0) return result;

  size_t n = data.size();
  long batches_per_epoch =
      static_cast<long>((n + cfg.batch_size - 1) / cfg.batch_size);
  int epochs = cfg.epochs;
  if (batches_per_epoch * epochs < cfg.min_steps) {
    epochs = static_cast<int>((cfg.min_steps + batches_per_epoch - 1) /
                              batches_per_epoch);
  }
  ScheduleSpec schedule = cfg.schedule;
  if (schedule.total_steps == 0) {
    schedule.total_steps = batches_per_epoch * epochs;
  }

  AdamState adam = AdamState::zeros(init.param_count());
  std::vector<double> grad(init.param_count());
  long step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<size_t> order = shuffled_indices(n, rng.child(epoch));
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      size_t end = std::min(n, start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      double inv = 1.0 / static_cast<double>(end - start);
      for (size_t b = start; b < end; ++b) {
        accumulate_rm_loss_grad(result.params, data[order[b]], inv, grad);
      }
      adam_step(result.params.data, grad, adam, lr_at(schedule, step));
      ++step;
    }
    // epoch metrics over the full dataset
    double loss = 0.0;
    double correct = 0.0;
    for (const auto& t : data) {
      double d = reward_score(result.params, t.prompt, t.chosen) -
                 reward_score(result.params, t.prompt, t.rejected);
      loss += softplus_neg(d);
      if (d > 0.0) correct += 1.0;
    }
    result.trace.push_back({epoch, loss / static_cast<double>(n),
                            correct / static_cast<double>(n)});
  }
  return result;
}

}  // namespace rsdpo
