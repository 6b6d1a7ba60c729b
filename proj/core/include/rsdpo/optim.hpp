#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsdpo/rng.hpp"
#include "rsdpo/toylm.hpp"
#include "rsdpo/vocab.hpp"

namespace rsdpo {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros(size_t n) {
    AdamState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    return s;
  }
};

// Bias-corrected Adam update; mutates params and state.
void adam_step(std::vector<double>& params, const std::vector<double>& grad,
               AdamState& state, double lr);

enum class ScheduleKind { Linear, Cosine, Constant };

ScheduleKind schedule_kind_from_string(const std::string& name);
std::string to_string(ScheduleKind kind);

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::Linear;
  double base_lr = 1e-3;
  long total_steps = 0;  // 0: training loops fill in their own step count
  long warmup_steps = 0;
};

// Learning rate at a step in [0, total]. With warmup, the first warmup_steps
// ramp linearly from 0 and the decay applies to the remaining progress.
double lr_at(const ScheduleSpec& spec, long step);

struct SFTRecord {
  Tokens prompt;
  Tokens response;
};

using SFTDataset = std::vector<SFTRecord>;

struct StepMetric {
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct SFTTrainConfig {
  int epochs = 10;
  int batch_size = 16;
  ScheduleSpec schedule;
  double weight_decay = 0.0;  // recorded knob; defaults off at desk scale
};

struct SFTResult {
  ToyLMParams params;
  std::vector<StepMetric> trace;
};

// Minimizes mean negative sequence_logprob over shuffled minibatches.
// A zero schedule.total_steps is resolved to epochs * ceil(n / batch);
// a nonzero value is honored as given.
SFTResult train_sft(const ToyLMParams& init, const SFTDataset& data,
                    const SFTTrainConfig& cfg, const RngStream& rng);

// Deterministic Fisher-Yates permutation of 0..n-1.
std::vector<size_t> shuffled_indices(size_t n, RngStream rng);

}  // namespace rsdpo
