#pragma once

#include <cstddef>
#include <vector>

#include "rsdpo/rng.hpp"
#include "rsdpo/vocab.hpp"

namespace rsdpo {

// Linear c-gram softmax language model. The logit for the next token v is
//   b[v] + sum_{i=1..c} T_i[ctx_i, v]
// where ctx_i is the token i positions back (PAD when out of range).
// Parameters live in one flat vector: T_1..T_c row-major, then b.
struct ToyLMParams {
  Vocab vocab;
  int context_len = 3;
  std::vector<double> data;

  static ToyLMParams zeros(const Vocab& vocab, int context_len);

  size_t param_count() const {
    size_t v = static_cast<size_t>(vocab.size);
    return static_cast<size_t>(context_len) * v * v + v;
  }
  size_t table_offset(int i) const {
    size_t v = static_cast<size_t>(vocab.size);
    return static_cast<size_t>(i) * v * v;
  }
  size_t bias_offset() const {
    size_t v = static_cast<size_t>(vocab.size);
    return static_cast<size_t>(context_len) * v * v;
  }
  // T_{i+1}[prev, next], i in [0, context_len)
  double& table(int i, int prev, int next) {
    return data[table_offset(i) + static_cast<size_t>(prev) * vocab.size +
                next];
  }
  double table(int i, int prev, int next) const {
    return data[table_offset(i) + static_cast<size_t>(prev) * vocab.size +
                next];
  }
  double& bias(int tok) { return data[bias_offset() + tok]; }
  double bias(int tok) const { return data[bias_offset() + tok]; }

  void validate() const;
};

// Decoding knobs. max_new_tokens defaults to the desk scale; set 512 to run
// the full-length configuration.
struct GenerationConfig {
  int k = 16;
  int max_new_tokens = 24;
  int top_k = 50;
  double top_p = 0.98;
  double sampling_temperature = 1.0;

  void validate() const;
};

// ctx[i] = token (i+1) positions back in prompt ++ response[0..t), PAD-padded.
void context_before(const ToyLMParams& params, const Tokens& prompt,
                    const Tokens& response, size_t t, int* ctx);

// Next-token logits for an explicit context window (ctx[i] = (i+1) back).
std::vector<double> logits(const ToyLMParams& params,
                           std::span<const int> context);

// log pi(response | prompt): sum over response positions of the log-softmax
// probability of the realized token. Prompt tokens contribute context only.
double sequence_logprob(const ToyLMParams& params, const Tokens& prompt,
                        const Tokens& response);

// Exact analytic gradient of sequence_logprob; same flat layout as params.
std::vector<double> logprob_grad(const ToyLMParams& params,
                                 const Tokens& prompt, const Tokens& response);

// Adds scale * d(sequence_logprob)/d(params) into grad (size param_count()).
void accumulate_logprob_grad(const ToyLMParams& params, const Tokens& prompt,
                             const Tokens& response, double scale,
                             std::vector<double>& grad);

// Temperature -> top-k -> top-p filter over raw logits; returns a length-V
// probability vector (nonnegative, sums to 1, zero off-support). Ties in both
// cuts break toward the lower token id.
std::vector<double> filter_logits(const std::vector<double>& raw,
                                  double temperature, int top_k, double top_p);

// The distribution sample_response draws from at one step: the same filter
// pipeline with PAD/BOS/SEP removed from candidacy, so their probability is
// zero before any renormalization. EOS stays eligible.
std::vector<double> generation_step_probs(const ToyLMParams& params,
                                          std::span<const int> context,
                                          const GenerationConfig& gen);

// Autoregressive sampling; stops at EOS or gen.max_new_tokens. Pure function
// of (params, prompt, gen, rng identifier).
Tokens sample_response(const ToyLMParams& params, const Tokens& prompt,
                       const GenerationConfig& gen, RngStream rng);

// k responses from sub-streams rng.child(0..k-1); order preserved,
// duplicates allowed.
std::vector<Tokens> sample_k_responses(const ToyLMParams& params,
                                       const Tokens& prompt,
                                       const GenerationConfig& gen,
                                       const RngStream& rng);

}  // namespace rsdpo
