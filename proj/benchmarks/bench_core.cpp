#include <benchmark/benchmark.h>

#include "rsdpo/dpo.hpp"
#include "rsdpo/pdgrs.hpp"
#include "rsdpo/reward.hpp"
#include "rsdpo/rng.hpp"
#include "rsdpo/synthdata.hpp"
#include "rsdpo/toylm.hpp"

namespace {

using namespace rsdpo;

ToyLMParams bench_lm() {
  ToyLMParams p = ToyLMParams::zeros(Vocab{32}, 3);
  RngStream rng(1, "bench_lm");
  for (double& x : p.data) x = rng.next_double() - 0.5;
  return p;
}

TaskSpec bench_task() { return make_task(Vocab{32}, RngStream(1, "task")); }

void BM_SequenceLogprob(benchmark::State& state) {
  ToyLMParams p = bench_lm();
  TaskSpec task = bench_task();
  Tokens prompt = gen_prompt(task, RngStream(2, "p"));
  Tokens resp = ideal_response(task, prompt);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sequence_logprob(p, prompt, resp));
  }
}
BENCHMARK(BM_SequenceLogprob);

void BM_LogprobGrad(benchmark::State& state) {
  ToyLMParams p = bench_lm();
  TaskSpec task = bench_task();
  Tokens prompt = gen_prompt(task, RngStream(2, "p"));
  Tokens resp = ideal_response(task, prompt);
  std::vector<double> grad(p.param_count(), 0.0);
  for (auto _ : state) {
    std::fill(grad.begin(), grad.end(), 0.0);
    accumulate_logprob_grad(p, prompt, resp, 1.0, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}
BENCHMARK(BM_LogprobGrad);

void BM_FilterLogits(benchmark::State& state) {
  RngStream rng(3, "logits");
  std::vector<double> raw(32);
  for (auto& x : raw) x = 4.0 * rng.next_double() - 2.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(filter_logits(raw, 1.0, 50, 0.98));
  }
}
BENCHMARK(BM_FilterLogits);

void BM_SampleResponse(benchmark::State& state) {
  ToyLMParams p = bench_lm();
  TaskSpec task = bench_task();
  Tokens prompt = gen_prompt(task, RngStream(2, "p"));
  GenerationConfig gen;
  uint64_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        sample_response(p, prompt, gen, RngStream(4, "s", i++)));
  }
}
BENCHMARK(BM_SampleResponse);

void BM_PdgrsPairs(benchmark::State& state) {
  CandidateSet c;
  c.prompt = {Vocab::BOS, 5, Vocab::SEP};
  RngStream rng(5, "rewards");
  for (int i = 0; i < 16; ++i) {
    c.scored.push_back({{Vocab::first_content + i % 8, Vocab::EOS,},
                        4.0 * rng.next_double() - 2.0});
  }
  PDGRSConfig cfg{1.0, 0.85};
  for (auto _ : state) {
    benchmark::DoNotOptimize(pdgrs_pairs(c, cfg));
  }
}
BENCHMARK(BM_PdgrsPairs);

void BM_RewardScore(benchmark::State& state) {
  RewardModelParams rm = RewardModelParams::zeros(Vocab{32}, 3);
  RngStream rng(6, "rm");
  for (double& x : rm.data) x = rng.next_double() - 0.5;
  TaskSpec task = bench_task();
  Tokens prompt = gen_prompt(task, RngStream(2, "p"));
  Tokens resp = ideal_response(task, prompt);
  for (auto _ : state) {
    benchmark::DoNotOptimize(reward_score(rm, prompt, resp));
  }
}
BENCHMARK(BM_RewardScore);

}  // namespace

BENCHMARK_MAIN();
