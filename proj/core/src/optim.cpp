#include "rsdpo/optim.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace rsdpo {

void adam_step(std::vector<double>& params, const std::vector<double>& grad,
               AdamState& state, double lr) {
  size_t n = params.size();
  if (grad.size() != n || state.m.size() != n || state.v.size() != n) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  state.step += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < n; ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] =
        state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    double m_hat = state.m[i] / bc1;
    double v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "linear") return ScheduleKind::Linear;
  if (name == "cosine") return ScheduleKind::Cosine;
  if (name == "constant") return ScheduleKind::Constant;
  throw std::invalid_argument("unknown schedule kind: " + name);
}

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Linear: return "linear";
    case ScheduleKind::Cosine: return "cosine";
    case ScheduleKind::Constant: return "constant";
  }
  throw std::invalid_argument("bad ScheduleKind");
}

double lr_at(const ScheduleSpec& spec, long step) {
  if (spec.total_steps < 1) {
    throw std::invalid_argument("lr_at: total_steps must be >= 1");
  }
  if (step < 0 || step > spec.total_steps) {
    throw std::invalid_argument("lr_at: step outside [0, total]");
  }
  if (spec.warmup_steps > 0 && step < spec.warmup_steps) {
    return spec.base_lr * static_cast<double>(step) /
           static_cast<double>(spec.warmup_steps);
  }
  long decay_total = spec.total_steps - spec.warmup_steps;
  double progress =
      decay_total > 0
          ? static_cast<double>(step - spec.warmup_steps) /
                static_cast<double>(decay_total)
          : 1.0;
  switch (spec.kind) {
    case ScheduleKind::Linear:
      return spec.base_lr * (1.0 - progress);
    case ScheduleKind::Cosine:
      return spec.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    case ScheduleKind::Constant:
      return spec.base_lr;
  }
  throw std::invalid_argument("bad ScheduleKind");
}

std::vector<size_t> shuffled_indices(size_t n, RngStream rng) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  for (size_t i = n; i > 1; --i) {
    size_t j = rng.next_index(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

SFTResult train_sft(const ToyLMParams& init, const SFTDataset& data,
                    const SFTTrainConfig& cfg, const RngStream& rng) {
  init.validate();
  if (data.empty()) throw std::invalid_argument("train_sft: empty dataset");
  if (cfg.epochs < 0) throw std::invalid_argument("train_sft: epochs >= 0");
  if (cfg.batch_size < 1) {
    throw std::invalid_argument("train_sft: batch_size >= 1");
  }
  for (const auto& rec : data) {
    check_prompt(init.vocab, rec.prompt);
    check_nonempty_response(init.vocab, rec.response);
  }

  SFTResult result{init, {}};
  if (cfg.epochs == 0) return result;

  size_t n = data.size();
  long batches_per_epoch =
      static_cast<long>((n + cfg.batch_size - 1) / cfg.batch_size);
  ScheduleSpec schedule = cfg.schedule;
  if (schedule.total_steps == 0) {
    schedule.total_steps = batches_per_epoch * cfg.epochs;
  }

  AdamState adam = AdamState::zeros(init.param_count());
  std::vector<double> grad(init.param_count());
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order = shuffled_indices(n, rng.child(epoch));
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      size_t end = std::min(n, start + cfg.batch_size);
      double batch_loss = 0.0;
      std::fill(grad.begin(), grad.end(), 0.0);
      double inv = 1.0 / static_cast<double>(end - start);
      for (size_t b = start; b < end; ++b) {
        const SFTRecord& rec = data[order[b]];
        batch_loss -= inv * sequence_logprob(result.params, rec.prompt,
                                             rec.response);
        // loss is -mean logprob, so accumulate -1/B times the logprob grad
        accumulate_logprob_grad(result.params, rec.prompt, rec.response, -inv,
                                grad);
      }
      if (cfg.weight_decay > 0.0) {
        for (size_t i = 0; i < grad.size(); ++i) {
          grad[i] += cfg.weight_decay * result.params.data[i];
        }
      }
      double lr = lr_at(schedule, step);
      adam_step(result.params.data, grad, adam, lr);
      result.trace.push_back({step, lr, batch_loss});
      ++step;
    }
  }
  return result;
}

}  // namespace rsdpo
