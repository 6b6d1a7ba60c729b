#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "rsdpo/rng.hpp"
#include "rsdpo/toylm.hpp"
#include "rsdpo/vocab.hpp"

using namespace rsdpo;

namespace {

ToyLMParams random_params(const Vocab& vocab, int c, uint64_t seed,
                          double scale = 1.0) {
  ToyLMParams p = ToyLMParams::zeros(vocab, c);
  RngStream rng(seed, "params");
  for (double& x : p.data) x = scale * (2.0 * rng.next_double() - 1.0);
  return p;
}

Tokens random_prompt(const Vocab& vocab, size_t content_len, uint64_t seed) {
  RngStream rng(seed, "prompt");
  Tokens p{Vocab::BOS};
  for (size_t i = 0; i < content_len; ++i) {
    p.push_back(Vocab::first_content +
                static_cast<int>(rng.next_index(vocab.content_count())));
  }
  p.push_back(Vocab::SEP);
  return p;
}

Tokens random_response(const Vocab& vocab, size_t len, uint64_t seed,
                       bool with_eos = true) {
  RngStream rng(seed, "resp");
  Tokens r;
  for (size_t i = 0; i + (with_eos ? 1 : 0) < len; ++i) {
    r.push_back(Vocab::first_content +
                static_cast<int>(rng.next_index(vocab.content_count())));
  }
  if (with_eos) r.push_back(Vocab::EOS);
  return r;
}

// Independent oracle: recompute each logit entry with explicit loops over
// the parameter tables.
std::vector<double> logits_oracle(const ToyLMParams& p,
                                  const std::vector<int>& ctx) {
  std::vector<double> out(p.vocab.size);
  for (int t = 0; t < p.vocab.size; ++t) {
    double acc = p.bias(t);
    for (int i = 0; i < p.context_len; ++i) acc += p.table(i, ctx[i], t);
    out[t] = acc;
  }
  return out;
}

// Brute-force sequence logprob: materialize every softmax by direct
// exponentiation, no max subtraction or shared code.
double logprob_oracle(const ToyLMParams& p, const Tokens& prompt,
                      const Tokens& response) {
  double total = 0.0;
  Tokens seq = prompt;
  for (int tok : response) {
    std::vector<int> ctx(p.context_len);
    for (int i = 0; i < p.context_len; ++i) {
      int back = i + 1;
      ctx[i] = back <= static_cast<int>(seq.size())
                   ? seq[seq.size() - back]
                   : Vocab::PAD;
    }
    std::vector<double> lg = logits_oracle(p, ctx);
    double z = 0.0;
    for (double x : lg) z += std::exp(x);
    total += std::log(std::exp(lg[tok]) / z);
    seq.push_back(tok);
  }
  return total;
}

// Enumeration oracle for the filter: softmax, sort, cumulate.
std::vector<double> filter_oracle(const std::vector<double>& raw, double temp,
                                  int top_k, double top_p) {
  size_t v = raw.size();
  std::vector<size_t> order(v);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return raw[a] > raw[b] || (raw[a] == raw[b] && a < b);
  });
  order.resize(std::min<size_t>(top_k, v));
  double z = 0.0;
  std::vector<double> probs(order.size());
  for (size_t i = 0; i < order.size(); ++i) {
    probs[i] = std::exp(raw[order[i]] / temp);
    z += probs[i];
  }
  for (double& x : probs) x /= z;
  size_t kept = order.size();
  double cum = 0.0;
  for (size_t i = 0; i < order.size(); ++i) {
    cum += probs[i];
    if (cum >= top_p) {
      kept = i + 1;
      break;
    }
  }
  double mass = 0.0;
  for (size_t i = 0; i < kept; ++i) mass += probs[i];
  std::vector<double> out(v, 0.0);
  for (size_t i = 0; i < kept; ++i) out[order[i]] = probs[i] / mass;
  return out;
}

}  // namespace

TEST_CASE("logits: zero params give the zero vector") {
  Vocab vocab{8};
  ToyLMParams p = ToyLMParams::zeros(vocab, 3);
  std::vector<int> ctx{4, 5, 6};
  for (double x : logits(p, ctx)) CHECK(x == 0.0);
}

TEST_CASE("logits: c=1 identity table is a one-hot lookup") {
  Vocab vocab{8};
  ToyLMParams p = ToyLMParams::zeros(vocab, 1);
  for (int t = 0; t < vocab.size; ++t) p.table(0, t, t) = 5.0;
  std::vector<int> ctx{7};
  std::vector<double> out = logits(p, ctx);
  for (int t = 0; t < vocab.size; ++t) CHECK(out[t] == (t == 7 ? 5.0 : 0.0));
}

TEST_CASE("logits: matches the per-entry summation oracle") {
  Vocab vocab{16};
  for (uint64_t seed = 0; seed < 10; ++seed) {
    ToyLMParams p = random_params(vocab, 3, seed);
    RngStream rng(seed, "ctx");
    std::vector<int> ctx(3);
    for (auto& c : ctx) c = static_cast<int>(rng.next_index(vocab.size));
    std::vector<double> got = logits(p, ctx);
    std::vector<double> want = logits_oracle(p, ctx);
    for (int t = 0; t < vocab.size; ++t) {
      CHECK(got[t] == doctest::Approx(want[t]).epsilon(1e-12));
    }
  }
}

TEST_CASE("logits: out-of-range context is an input error") {
  Vocab vocab{8};
  ToyLMParams p = ToyLMParams::zeros(vocab, 2);
  std::vector<int> bad{3, 9};
  CHECK_THROWS_AS((void)logits(p, bad), std::invalid_argument);
}

TEST_CASE("sequence_logprob: uniform model scores L * ln(1/V)") {
  Vocab vocab{32};
  ToyLMParams p = ToyLMParams::zeros(vocab, 3);
  Tokens prompt = random_prompt(vocab, 5, 1);
  Tokens resp = random_response(vocab, 7, 2);
  CHECK(sequence_logprob(p, prompt, resp) ==
        doctest::Approx(7.0 * std::log(1.0 / 32.0)).epsilon(1e-12));
}

TEST_CASE("sequence_logprob: chain-rule decomposition over splits") {
  Vocab vocab{12};
  for (uint64_t seed = 0; seed < 20; ++seed) {
    ToyLMParams p = random_params(vocab, 3, seed);
    Tokens prompt = random_prompt(vocab, 4 + seed % 3, seed);
    Tokens resp = random_response(vocab, 9, seed + 100);
    size_t m = 1 + seed % (resp.size() - 1);
    Tokens y1(resp.begin(), resp.begin() + m);
    Tokens y2(resp.begin() + m, resp.end());
    Tokens extended = prompt;
    extended.insert(extended.end(), y1.begin(), y1.end());
    double whole = sequence_logprob(p, prompt, resp);
    double split = sequence_logprob(p, prompt, y1) +
                   sequence_logprob(p, extended, y2);
    CHECK(whole == doctest::Approx(split).epsilon(1e-9));
  }
}

TEST_CASE("sequence_logprob: matches the direct-exponentiation oracle") {
  Vocab vocab{8};
  for (uint64_t seed = 0; seed < 20; ++seed) {
    ToyLMParams p = random_params(vocab, 2, seed, 2.0);
    Tokens prompt = random_prompt(vocab, 3, seed);
    Tokens resp = random_response(vocab, 6, seed + 50);
    CHECK(sequence_logprob(p, prompt, resp) ==
          doctest::Approx(logprob_oracle(p, prompt, resp)).epsilon(1e-10));
  }
}

TEST_CASE("sequence_logprob: empty response is an input error") {
  Vocab vocab{8};
  ToyLMParams p = ToyLMParams::zeros(vocab, 2);
  Tokens prompt = random_prompt(vocab, 3, 0);
  CHECK_THROWS_AS((void)sequence_logprob(p, prompt, {}),
                  std::invalid_argument);
}

TEST_CASE("logprob_grad: uniform model bias gradient is one-hot minus 1/V") {
  Vocab vocab{8};
  ToyLMParams p = ToyLMParams::zeros(vocab, 2);
  Tokens prompt = random_prompt(vocab, 3, 0);
  Tokens resp{5};
  std::vector<double> g = logprob_grad(p, prompt, resp);
  for (int t = 0; t < vocab.size; ++t) {
    double want = (t == 5 ? 1.0 : 0.0) - 1.0 / 8.0;
    CHECK(g[p.bias_offset() + t] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("logprob_grad: matches central finite differences") {
  Vocab vocab{8};
  const double step = 1e-5;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    ToyLMParams p = random_params(vocab, 2, seed);
    Tokens prompt = random_prompt(vocab, 3, seed);
    Tokens resp = random_response(vocab, 5, seed + 10);
    std::vector<double> g = logprob_grad(p, prompt, resp);
    RngStream pick(seed, "coords");
    for (int probe = 0; probe < 20; ++probe) {
      size_t i = pick.next_index(p.data.size());
      ToyLMParams hi = p, lo = p;
      hi.data[i] += step;
      lo.data[i] -= step;
      double fd = (sequence_logprob(hi, prompt, resp) -
                   sequence_logprob(lo, prompt, resp)) /
                  (2 * step);
      double denom = std::max(1.0, std::abs(fd));
      CHECK(std::abs(g[i] - fd) / denom < 1e-4);
    }
  }
}

TEST_CASE("logprob_grad: rows never used as context stay exactly zero") {
  Vocab vocab{8};
  ToyLMParams p = random_params(vocab, 2, 3);
  Tokens prompt{Vocab::BOS, 4, Vocab::SEP};
  Tokens resp{5, Vocab::EOS};
  std::vector<double> g = logprob_grad(p, prompt, resp);
  // token 7 never appears in any context window
  for (int i = 0; i < p.context_len; ++i) {
    for (int next = 0; next < vocab.size; ++next) {
      CHECK(g[p.table_offset(i) + 7 * vocab.size + next] == 0.0);
    }
  }
}

TEST_CASE("filter_logits: top_k=1 is one-hot at the argmax, low id on ties") {
  std::vector<double> raw{1.0, 3.0, 3.0, 0.0};
  std::vector<double> p = filter_logits(raw, 1.0, 1, 1.0);
  CHECK(p[1] == 1.0);
  CHECK(p[0] == 0.0);
  CHECK(p[2] == 0.0);
  CHECK(p[3] == 0.0);
}

TEST_CASE("filter_logits: no filtering reduces to plain softmax") {
  Vocab vocab{8};
  RngStream rng(11, "logits");
  std::vector<double> raw(vocab.size);
  for (auto& x : raw) x = 4.0 * rng.next_double() - 2.0;
  std::vector<double> p = filter_logits(raw, 1.0, vocab.size, 1.0);
  double z = 0.0;
  for (double x : raw) z += std::exp(x);
  for (int t = 0; t < vocab.size; ++t) {
    CHECK(p[t] == doctest::Approx(std::exp(raw[t]) / z).epsilon(1e-12));
  }
}

TEST_CASE("filter_logits: worked top-p example keeps ids {0,1,2}") {
  std::vector<double> raw{2.0, 1.0, 0.0, -1.0};
  std::vector<double> p = filter_logits(raw, 1.0, 4, 0.9);
  std::vector<double> want = filter_oracle(raw, 1.0, 4, 0.9);
  CHECK(p[3] == 0.0);
  CHECK(p[0] > 0.0);
  CHECK(p[1] > 0.0);
  CHECK(p[2] > 0.0);
  for (size_t i = 0; i < p.size(); ++i) {
    CHECK(p[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("filter_logits: matches the enumeration oracle on random inputs") {
  RngStream rng(17, "cases");
  for (int trial = 0; trial < 200; ++trial) {
    size_t v = 4 + rng.next_index(12);
    std::vector<double> raw(v);
    for (auto& x : raw) x = 6.0 * rng.next_double() - 3.0;
    double temp = 0.25 + 2.0 * rng.next_double();
    int top_k = 1 + static_cast<int>(rng.next_index(v + 2));
    double top_p = 0.05 + 0.95 * rng.next_double();
    std::vector<double> got = filter_logits(raw, temp, top_k, top_p);
    std::vector<double> want = filter_oracle(raw, temp, top_k, top_p);
    double sum = 0.0;
    int support = 0;
    for (size_t i = 0; i < v; ++i) {
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
      CHECK(got[i] >= 0.0);
      sum += got[i];
      if (got[i] > 0.0) ++support;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    CHECK(support <= top_k);
  }
}

TEST_CASE("filter_logits: shift invariance") {
  RngStream rng(23, "shift");
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> raw(10);
    for (auto& x : raw) x = 5.0 * rng.next_double() - 2.5;
    double c = 20.0 * rng.next_double() - 10.0;
    std::vector<double> shifted = raw;
    for (auto& x : shifted) x += c;
    std::vector<double> a = filter_logits(raw, 0.7, 6, 0.9);
    std::vector<double> b = filter_logits(shifted, 0.7, 6, 0.9);
    for (size_t i = 0; i < raw.size(); ++i) {
      CHECK(std::abs(a[i] - b[i]) <= 1e-12);
    }
  }
}

TEST_CASE("filter_logits: non-finite input is an input error") {
  std::vector<double> raw{0.0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS((void)filter_logits(raw, 1.0, 2, 1.0),
                  std::invalid_argument);
}

TEST_CASE("sample_response: top_k=1 equals the greedy oracle") {
  Vocab vocab{16};
  ToyLMParams p = random_params(vocab, 3, 31, 2.0);
  Tokens prompt = random_prompt(vocab, 5, 31);
  GenerationConfig gen;
  gen.top_k = 1;
  gen.max_new_tokens = 12;
  Tokens got = sample_response(p, prompt, gen, RngStream(0, "any"));

  // greedy oracle: argmax over non-special logits (EOS allowed), low id wins
  Tokens want;
  std::vector<int> ctx(p.context_len);
  for (int step = 0; step < gen.max_new_tokens; ++step) {
    context_before(p, prompt, want, want.size(), ctx.data());
    std::vector<double> lg = logits(p, ctx);
    int best = Vocab::EOS;
    for (int t = Vocab::first_content; t < vocab.size; ++t) {
      if (lg[t] > lg[best]) best = t;
    }
    want.push_back(best);
    if (best == Vocab::EOS) break;
  }
  CHECK(got == want);
}

TEST_CASE("sample_response: identical identifiers give identical output") {
  Vocab vocab{16};
  ToyLMParams p = random_params(vocab, 3, 37);
  Tokens prompt = random_prompt(vocab, 6, 37);
  GenerationConfig gen;
  Tokens a = sample_response(p, prompt, gen, RngStream(9, "sample", 4));
  Tokens b = sample_response(p, prompt, gen, RngStream(9, "sample", 4));
  CHECK(a == b);
}

TEST_CASE("sample_response: never emits PAD/BOS/SEP") {
  Vocab vocab{8};
  // bias the specials hard so masking is what keeps them out
  ToyLMParams p = ToyLMParams::zeros(vocab, 2);
  p.bias(Vocab::PAD) = 50.0;
  p.bias(Vocab::BOS) = 50.0;
  p.bias(Vocab::SEP) = 50.0;
  Tokens prompt = random_prompt(vocab, 4, 5);
  GenerationConfig gen;
  gen.max_new_tokens = 16;
  for (uint64_t i = 0; i < 50; ++i) {
    Tokens r = sample_response(p, prompt, gen, RngStream(1, "mask", i));
    for (int tok : r) {
      CHECK(tok != Vocab::PAD);
      CHECK(tok != Vocab::BOS);
      CHECK(tok != Vocab::SEP);
    }
  }
}

TEST_CASE("sample_response: first-token distribution matches the filter") {
  Vocab vocab{8};
  ToyLMParams p = random_params(vocab, 1, 41, 1.5);
  Tokens prompt = random_prompt(vocab, 4, 41);
  GenerationConfig gen;
  gen.top_k = 6;
  gen.top_p = 0.95;

  std::vector<int> ctx(p.context_len);
  context_before(p, prompt, {}, 0, ctx.data());
  std::vector<double> probs = generation_step_probs(p, ctx, gen);

  const int draws = 10000;
  std::vector<int> counts(vocab.size, 0);
  RngStream rng(41, "draws");
  for (int i = 0; i < draws; ++i) {
    Tokens r = sample_response(p, prompt, gen, rng.child(i));
    counts[r[0]]++;
  }
  for (int t = 0; t < vocab.size; ++t) {
    if (probs[t] == 0.0) {
      CHECK(counts[t] == 0);
      continue;
    }
    double expected = draws * probs[t];
    double se = std::sqrt(draws * probs[t] * (1.0 - probs[t]));
    CHECK(std::abs(counts[t] - expected) <= 3.0 * se);
  }
}

TEST_CASE("sample_k_responses: equals manual child-stream composition") {
  Vocab vocab{16};
  ToyLMParams p = random_params(vocab, 3, 43);
  Tokens prompt = random_prompt(vocab, 5, 43);
  GenerationConfig gen;
  gen.k = 2;
  RngStream rng(7, "kset");
  std::vector<Tokens> ks = sample_k_responses(p, prompt, gen, rng);
  CHECK(ks.size() == 2);
  CHECK(ks[0] == sample_response(p, prompt, gen, rng.child(0)));
  CHECK(ks[1] == sample_response(p, prompt, gen, rng.child(1)));
}

TEST_CASE("sample_k_responses: paper decoding config runs at k=16") {
  Vocab vocab{32};
  ToyLMParams p = random_params(vocab, 3, 47);
  Tokens prompt = random_prompt(vocab, 64, 47);
  GenerationConfig gen;  // k=16, top_k=50 (clamped to V), top_p=0.98
  std::vector<Tokens> ks =
      sample_k_responses(p, prompt, gen, RngStream(3, "k16"));
  CHECK(ks.size() == 16);
  for (const auto& r : ks) {
    CHECK(!r.empty());
    CHECK(r.size() <= static_cast<size_t>(gen.max_new_tokens));
  }
}
