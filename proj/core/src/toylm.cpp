#include "rsdpo/toylm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rsdpo {

ToyLMParams ToyLMParams::zeros(const Vocab& vocab, int context_len) {
  vocab.validate();
  if (context_len < 1) {
    throw std::invalid_argument("ToyLMParams: context_len must be positive");
  }
  ToyLMParams p;
  p.vocab = vocab;
  p.context_len = context_len;
  p.data.assign(p.param_count(), 0.0);
  return p;
}

void ToyLMParams::validate() const {
  vocab.validate();
  if (context_len < 1) {
    throw std::invalid_argument("ToyLMParams: context_len must be positive");
  }
  if (data.size() != param_count()) {
    throw std::invalid_argument("ToyLMParams: parameter count mismatch");
  }
  for (double x : data) {
    if (!std::isfinite(x)) {
      throw std::invalid_argument("ToyLMParams: non-finite parameter");
    }
  }
}

void GenerationConfig::validate() const {
  if (k < 2) throw std::invalid_argument("GenerationConfig: k must be >= 2");
  if (top_k < 1) throw std::invalid_argument("GenerationConfig: top_k >= 1");
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw std::invalid_argument("GenerationConfig: top_p in (0, 1]");
  }
  if (!(sampling_temperature > 0.0)) {
    throw std::invalid_argument("GenerationConfig: temperature > 0");
  }
  if (max_new_tokens < 1) {
    throw std::invalid_argument("GenerationConfig: max_new_tokens >= 1");
  }
}

void context_before(const ToyLMParams& params, const Tokens& prompt,
                    const Tokens& response, size_t t, int* ctx) {
  ngram_context(prompt, response, t, params.context_len, ctx);
}

std::vector<double> logits(const ToyLMParams& params,
                           std::span<const int> context) {
  if (static_cast<int>(context.size()) != params.context_len) {
    throw std::invalid_argument("logits: context must have exactly c entries");
  }
  const int v = params.vocab.size;
  std::vector<double> out(params.data.begin() + params.bias_offset(),
                          params.data.end());
  for (int i = 0; i < params.context_len; ++i) {
    int prev = context[i];
    if (!params.vocab.contains(prev)) {
      throw std::invalid_argument("logits: context token out of range");
    }
    const double* row =
        params.data.data() + params.table_offset(i) +
        static_cast<size_t>(prev) * v;
    for (int t = 0; t < v; ++t) out[t] += row[t];
  }
  return out;
}

namespace {

// In-place softmax with max subtraction; returns log of the normalizer
// relative to the max (so logZ = max + log(sum)).
double softmax_inplace(std::vector<double>& x) {
  double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double& e : x) {
    e = std::exp(e - mx);
    sum += e;
  }
  for (double& e : x) e /= sum;
  return mx + std::log(sum);
}

double logsumexp(const std::vector<double>& x) {
  double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double e : x) sum += std::exp(e - mx);
  return mx + std::log(sum);
}

// Scoring accepts any in-range conditioning sequence so that logprobs
// decompose over response splits (the tail of one response may condition the
// next); strict prompt shape is enforced at dataset and decoding boundaries.
void check_logprob_inputs(const ToyLMParams& params, const Tokens& prompt,
                          const Tokens& response) {
  check_tokens_in_range(params.vocab, prompt, "prompt");
  if (response.empty()) {
    throw std::invalid_argument("sequence_logprob: empty response");
  }
  check_response(params.vocab, response);
}

}  // namespace

double sequence_logprob(const ToyLMParams& params, const Tokens& prompt,
                        const Tokens& response) {
  check_logprob_inputs(params, prompt, response);
  std::vector<int> ctx(params.context_len);
  double total = 0.0;
  for (size_t t = 0; t < response.size(); ++t) {
    context_before(params, prompt, response, t, ctx.data());
    std::vector<double> lg = logits(params, ctx);
    total += lg[response[t]] - logsumexp(lg);
  }
  return total;
}

void accumulate_logprob_grad(const ToyLMParams& params, const Tokens& prompt,
                             const Tokens& response, double scale,
                             std::vector<double>& grad) {
  check_logprob_inputs(params, prompt, response);
  if (grad.size() != params.param_count()) {
    throw std::invalid_argument("accumulate_logprob_grad: shape mismatch");
  }
  const int v = params.vocab.size;
  std::vector<int> ctx(params.context_len);
  std::vector<double> probs(v);
  double* bias_grad = grad.data() + params.bias_offset();
  for (size_t t = 0; t < response.size(); ++t) {
    context_before(params, prompt, response, t, ctx.data());
    probs = logits(params, ctx);
    softmax_inplace(probs);
    // d logp / d logit_j = 1[j == y] - p_j, shared by the bias row and the
    // one touched row of each table.
    int y = response[t];
    for (int j = 0; j < v; ++j) {
      double delta = scale * ((j == y ? 1.0 : 0.0) - probs[j]);
      bias_grad[j] += delta;
      for (int i = 0; i < params.context_len; ++i) {
        grad[params.table_offset(i) + static_cast<size_t>(ctx[i]) * v + j] +=
            delta;
      }
    }
  }
}

std::vector<double> logprob_grad(const ToyLMParams& params,
                                 const Tokens& prompt,
                                 const Tokens& response) {
  std::vector<double> grad(params.param_count(), 0.0);
  accumulate_logprob_grad(params, prompt, response, 1.0, grad);
  return grad;
}

namespace {

// Shared filter core over an explicit candidate id list. Returns a full-V
// probability vector with zero mass off the kept set.
std::vector<double> filter_over_candidates(const std::vector<double>& raw,
                                           std::vector<int> ids,
                                           double temperature, int top_k,
                                           double top_p) {
  // Sort by scaled logit descending, lower id first on ties.
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    if (raw[a] != raw[b]) return raw[a] > raw[b];
    return a < b;
  });
  size_t keep_k = std::min<size_t>(static_cast<size_t>(top_k), ids.size());
  ids.resize(keep_k);

  // Softmax over the top-k survivors (temperature applied, max subtracted).
  std::vector<double> p(keep_k);
  double mx = raw[ids[0]] / temperature;
  double sum = 0.0;
  for (size_t i = 0; i < keep_k; ++i) {
    p[i] = std::exp(raw[ids[i]] / temperature - mx);
    sum += p[i];
  }
  for (double& e : p) e /= sum;

  // Smallest descending prefix with cumulative mass >= top_p; always at
  // least one. Rounding may leave the full cumsum a hair below 1, in which
  // case everything is kept.
  size_t keep_p = keep_k;
  double cum = 0.0;
  for (size_t i = 0; i < keep_k; ++i) {
    cum += p[i];
    if (cum >= top_p) {
      keep_p = i + 1;
      break;
    }
  }

  double kept_mass = 0.0;
  for (size_t i = 0; i < keep_p; ++i) kept_mass += p[i];
  std::vector<double> out(raw.size(), 0.0);
  for (size_t i = 0; i < keep_p; ++i) out[ids[i]] = p[i] / kept_mass;
  return out;
}

}  // namespace

std::vector<double> filter_logits(const std::vector<double>& raw,
                                  double temperature, int top_k,
                                  double top_p) {
  if (raw.empty()) throw std::invalid_argument("filter_logits: empty input");
  for (double x : raw) {
    if (!std::isfinite(x)) {
      throw std::invalid_argument("filter_logits: non-finite logit");
    }
  }
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("filter_logits: temperature must be > 0");
  }
  if (top_k < 1) throw std::invalid_argument("filter_logits: top_k >= 1");
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw std::invalid_argument("filter_logits: top_p in (0, 1]");
  }
  std::vector<int> ids(raw.size());
  std::iota(ids.begin(), ids.end(), 0);
  return filter_over_candidates(raw, std::move(ids), temperature, top_k,
                                top_p);
}

std::vector<double> generation_step_probs(const ToyLMParams& params,
                                          std::span<const int> context,
                                          const GenerationConfig& gen) {
  std::vector<double> raw = logits(params, context);
  std::vector<int> ids;
  ids.reserve(raw.size() - 3);
  ids.push_back(Vocab::EOS);
  for (int t = Vocab::first_content; t < params.vocab.size; ++t) {
    ids.push_back(t);
  }
  return filter_over_candidates(raw, std::move(ids), gen.sampling_temperature,
                                gen.top_k, gen.top_p);
}

Tokens sample_response(const ToyLMParams& params, const Tokens& prompt,
                       const GenerationConfig& gen, RngStream rng) {
  params.validate();
  gen.validate();
  check_prompt(params.vocab, prompt);
  Tokens response;
  response.reserve(gen.max_new_tokens);
  std::vector<int> ctx(params.context_len);
  for (int step = 0; step < gen.max_new_tokens; ++step) {
    context_before(params, prompt, response, response.size(), ctx.data());
    std::vector<double> probs = generation_step_probs(params, ctx, gen);
    int tok = static_cast<int>(rng.sample_categorical(probs));
    response.push_back(tok);
    if (tok == Vocab::EOS) break;
  }
  return response;
}

std::vector<Tokens> sample_k_responses(const ToyLMParams& params,
                                       const Tokens& prompt,
                                       const GenerationConfig& gen,
                                       const RngStream& rng) {
  std::vector<Tokens> out;
  out.reserve(gen.k);
  for (int j = 0; j < gen.k; ++j) {
    out.push_back(sample_response(params, prompt, gen, rng.child(j)));
  }
  return out;
}

}  // namespace rsdpo
