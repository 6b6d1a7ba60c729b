#pragma once

#include <vector>

#include "rsdpo/optim.hpp"
#include "rsdpo/reward.hpp"
#include "rsdpo/rng.hpp"
#include "rsdpo/toylm.hpp"
#include "rsdpo/vocab.hpp"

namespace rsdpo {

// Token-permutation copy task with an exact reward oracle.
//
// Prompts are BOS <chain body> <marker> SEP. The body starts at a fixed
// anchor token and walks the cyclic successor over the non-marker content
// tokens, replacing a step by a uniform random chain token with probability
// chain_noise (the walk continues from the replacement); the marker (the
// first content id) closes every prompt. The ideal response maps each
// content token through `perm` and appends EOS.
//
// The anchored chain keeps the task inside what a c-gram model can
// represent: the first ideal token is a constant, every later one follows
// from the previous response token, and the marker image makes EOS timing
// learnable, all up to the injected noise. That leaves a policy trained on
// corrupted demonstrations measurable headroom.
struct TaskSpec {
  Vocab vocab;
  std::vector<int> perm;  // size V; identity on specials, bijection on content
  int min_prompt_len = 4;  // content tokens per prompt, marker included
  int max_prompt_len = 10;
  double length_penalty = 0.5;  // lambda
  double chain_noise = 0.1;

  int marker() const { return Vocab::first_content; }
  int chain_first() const { return Vocab::first_content + 1; }
  int chain_count() const { return vocab.size - chain_first(); }
  int chain_successor(int tok) const {
    return chain_first() + (tok - chain_first() + 1) % chain_count();
  }

  void validate() const;
};

// Task with a permutation drawn from the stream (identity on specials).
TaskSpec make_task(const Vocab& vocab, RngStream rng);

struct AnnotatorConfig {
  double flip_prob = 0.1;        // epsilon, label flips
  double corruption_rate = 0.2;  // rho, per-token demonstration corruption

  void validate() const;
};

Tokens gen_prompt(const TaskSpec& task, RngStream rng);
std::vector<Tokens> gen_prompts(const TaskSpec& task, size_t n,
                                const RngStream& rng);

// perm applied tokenwise to the prompt content, EOS appended.
Tokens ideal_response(const TaskSpec& task, const Tokens& prompt);

// Positionwise agreement with the ideal response (terminal EOS compared like
// any other position) minus a relative length penalty, clamped to [-1, 1].
// Equals 1 exactly when response == ideal_response.
double oracle_reward(const TaskSpec& task, const Tokens& prompt,
                     const Tokens& response);

// Each content token of the ideal response is independently replaced, with
// probability rate, by a uniformly random *different* content token.
Tokens corrupt_response(const TaskSpec& task, const Tokens& ideal, double rate,
                        RngStream& rng);

SFTDataset gen_sft_dataset(const TaskSpec& task, size_t n,
                           const AnnotatorConfig& annot, const RngStream& rng);

// Two independently corrupted responses per prompt, ranked by the oracle
// (ties keep the first), label flipped with probability epsilon.
PreferenceDataset gen_preference_dataset(const TaskSpec& task, size_t n,
                                         const AnnotatorConfig& annot,
                                         const RngStream& rng);

struct WinRate {
  double rate = 0.0;
  double stderr_ = 0.0;
  size_t n = 0;
};

// Oracle-judged pairwise win rate of candidate over baseline; one sampled
// response each per prompt, 0.5 credit for exact reward ties. Passing the
// same stream for both sides makes equal models tie on every prompt.
WinRate eval_winrate(const ToyLMParams& candidate, const ToyLMParams& baseline,
                     const TaskSpec& task, const std::vector<Tokens>& prompts,
                     const GenerationConfig& gen, const RngStream& rng_cand,
                     const RngStream& rng_base, int prompt_workers = 1);

}  // namespace rsdpo
