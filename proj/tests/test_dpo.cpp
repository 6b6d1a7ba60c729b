#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "rsdpo/dpo.hpp"
#include "rsdpo/rng.hpp"
#include "rsdpo/synthdata.hpp"

using namespace rsdpo;

namespace {

ToyLMParams random_lm(const Vocab& vocab, int c, uint64_t seed) {
  ToyLMParams p = ToyLMParams::zeros(vocab, c);
  RngStream rng(seed, "lm");
  for (double& x : p.data) x = rng.next_double() - 0.5;
  return p;
}

PreferenceTriple triple_fixture() {
  return {{Vocab::BOS, 4, 5, Vocab::SEP},
          {6, 7, Vocab::EOS},
          {7, Vocab::EOS},
          std::nullopt};
}

}  // namespace

TEST_CASE("implicit_reward: zero at policy == ref, linear in beta") {
  Vocab vocab{8};
  ToyLMParams ref = random_lm(vocab, 2, 1);
  PreferenceTriple t = triple_fixture();
  CHECK(implicit_reward(ref, ref, t.prompt, t.chosen, 0.1) == 0.0);

  ToyLMParams policy = random_lm(vocab, 2, 2);
  double r1 = implicit_reward(policy, ref, t.prompt, t.chosen, 0.1);
  double r2 = implicit_reward(policy, ref, t.prompt, t.chosen, 0.2);
  CHECK(r2 == doctest::Approx(2.0 * r1).epsilon(1e-12));

  double direct = 0.1 * (sequence_logprob(policy, t.prompt, t.chosen) -
                         sequence_logprob(ref, t.prompt, t.chosen));
  CHECK(r1 == doctest::Approx(direct).epsilon(1e-15));
}

TEST_CASE("dpo_loss: ln 2 at the reference point") {
  Vocab vocab{8};
  ToyLMParams ref = random_lm(vocab, 2, 3);
  CHECK(dpo_loss(ref, ref, triple_fixture(), 0.1) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("dpo_loss: swap identity holds numerically") {
  Vocab vocab{8};
  for (uint64_t seed = 0; seed < 20; ++seed) {
    ToyLMParams ref = random_lm(vocab, 2, seed);
    ToyLMParams policy = random_lm(vocab, 2, seed + 100);
    PreferenceTriple t = triple_fixture();
    PreferenceTriple swapped = t;
    std::swap(swapped.chosen, swapped.rejected);
    double m = implicit_reward(policy, ref, t.prompt, t.chosen, 0.1) -
               implicit_reward(policy, ref, t.prompt, t.rejected, 0.1);
    double loss = dpo_loss(policy, ref, t, 0.1);
    double loss_swapped = dpo_loss(policy, ref, swapped, 0.1);
    CHECK(loss_swapped == doctest::Approx(m + loss).epsilon(1e-9));
  }
}

TEST_CASE("dpo loss identity: -logsig(m) - logsig(-m) = |m| + 2 softplus(-|m|)") {
  RngStream rng(5, "margins");
  for (int i = 0; i < 500; ++i) {
    double m = 80.0 * rng.next_double() - 40.0;
    double lhs = softplus_neg(m) + softplus_neg(-m);
    double rhs = std::abs(m) + 2.0 * softplus_neg(std::abs(m));
    CHECK(std::abs(lhs - rhs) <= 1e-12);
  }
}

TEST_CASE("dpo_grad: matches central finite differences") {
  Vocab vocab{8};
  const double step = 1e-5;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    ToyLMParams ref = random_lm(vocab, 2, seed);
    ToyLMParams policy = random_lm(vocab, 2, seed + 50);
    PreferenceTriple t = triple_fixture();
    std::vector<double> g = dpo_grad(policy, ref, t, 0.1);
    RngStream pick(seed, "coords");
    for (int probe = 0; probe < 25; ++probe) {
      size_t i = pick.next_index(policy.data.size());
      ToyLMParams hi = policy, lo = policy;
      hi.data[i] += step;
      lo.data[i] -= step;
      double fd =
          (dpo_loss(hi, ref, t, 0.1) - dpo_loss(lo, ref, t, 0.1)) / (2 * step);
      double denom = std::max(1.0, std::abs(fd));
      CHECK(std::abs(g[i] - fd) / denom < 1e-4);
    }
  }
}

TEST_CASE("dpo_grad: at policy == ref it is the half-beta logprob contrast") {
  Vocab vocab{8};
  ToyLMParams ref = random_lm(vocab, 2, 7);
  PreferenceTriple t = triple_fixture();
  double beta = 0.1;
  std::vector<double> g = dpo_grad(ref, ref, t, beta);
  std::vector<double> gw = logprob_grad(ref, t.prompt, t.chosen);
  std::vector<double> gl = logprob_grad(ref, t.prompt, t.rejected);
  for (size_t i = 0; i < g.size(); ++i) {
    CHECK(g[i] ==
          doctest::Approx(-0.5 * beta * (gw[i] - gl[i])).epsilon(1e-12));
  }
}

TEST_CASE("dpo_grad: vanishes at saturated margins") {
  Vocab vocab{8};
  ToyLMParams ref = ToyLMParams::zeros(vocab, 1);
  ToyLMParams policy = ref;
  // after SEP the policy all but forces the chosen first token, collapsing
  // the rejected response's likelihood: margin far past 40
  policy.table(0, Vocab::SEP, 6) = 60.0;
  PreferenceTriple t = triple_fixture();
  double margin = implicit_reward(policy, ref, t.prompt, t.chosen, 1.0) -
                  implicit_reward(policy, ref, t.prompt, t.rejected, 1.0);
  CHECK(margin > 40.0);
  std::vector<double> g = dpo_grad(policy, ref, t, 1.0);
  double norm = 0.0;
  for (double x : g) norm = std::max(norm, std::abs(x));
  CHECK(norm < 1e-6);
}

TEST_CASE("reward_accuracy_and_margin: ties at the reference point") {
  Vocab vocab{8};
  ToyLMParams ref = random_lm(vocab, 2, 9);
  PreferenceDataset eval{triple_fixture(), triple_fixture()};
  DPOBatchMetrics m = reward_accuracy_and_margin(ref, ref, eval, 0.1);
  CHECK(m.reward_accuracy == 0.5);
  CHECK(m.reward_margin == 0.0);
  CHECK(m.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("reward_accuracy_and_margin: hand-computed two-triple set") {
  Vocab vocab{8};
  ToyLMParams ref = ToyLMParams::zeros(vocab, 1);
  ToyLMParams policy = ref;
  policy.bias(6) = 1.0;  // favors token 6
  PreferenceTriple likes_6{{Vocab::BOS, 4, Vocab::SEP},
                           {6, Vocab::EOS},
                           {5, Vocab::EOS},
                           std::nullopt};
  PreferenceTriple dislikes_6{{Vocab::BOS, 4, Vocab::SEP},
                              {7, Vocab::EOS},
                              {6, Vocab::EOS},
                              std::nullopt};
  double beta = 0.5;
  PreferenceDataset eval{likes_6, dislikes_6};
  // margins are symmetric: +beta*d and -beta*d with the same d
  double d = (sequence_logprob(policy, likes_6.prompt, likes_6.chosen) -
              sequence_logprob(ref, likes_6.prompt, likes_6.chosen)) -
             (sequence_logprob(policy, likes_6.prompt, likes_6.rejected) -
              sequence_logprob(ref, likes_6.prompt, likes_6.rejected));
  DPOBatchMetrics m = reward_accuracy_and_margin(policy, ref, eval, beta);
  CHECK(m.reward_margin == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(m.reward_accuracy == 0.5);  // one win, one loss
  double want_loss =
      0.5 * (softplus_neg(beta * d) + softplus_neg(-beta * d));
  CHECK(m.loss == doctest::Approx(want_loss).epsilon(1e-12));
}

TEST_CASE("reward_accuracy_and_margin: beta rescaling") {
  Vocab vocab{8};
  ToyLMParams ref = random_lm(vocab, 2, 11);
  ToyLMParams policy = random_lm(vocab, 2, 12);
  PreferenceDataset eval{triple_fixture()};
  DPOBatchMetrics a = reward_accuracy_and_margin(policy, ref, eval, 0.1);
  DPOBatchMetrics b = reward_accuracy_and_margin(policy, ref, eval, 0.3);
  CHECK(a.reward_accuracy == b.reward_accuracy);
  CHECK(b.reward_margin == doctest::Approx(3.0 * a.reward_margin)
                               .epsilon(1e-12));
}

TEST_CASE("train_dpo: zero epochs returns the reference") {
  Vocab vocab{8};
  ToyLMParams ref = random_lm(vocab, 2, 13);
  PreferenceDataset data{triple_fixture()};
  DPOConfig cfg;
  cfg.epochs = 0;
  DPOResult result = train_dpo(ref, data, cfg, RngStream(1, "dpo"));
  CHECK(result.policy.data == ref.data);
  CHECK(reward_accuracy_and_margin(result.policy, ref, data, cfg.beta).loss ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("train_dpo: drives a single triple's margin up") {
  Vocab vocab{8};
  ToyLMParams ref = random_lm(vocab, 2, 15);
  PreferenceDataset data{triple_fixture()};
  DPOConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 1;
  cfg.step_budget = 0;
  cfg.schedule = {ScheduleKind::Constant, 0.05, 0, 0};
  DPOResult result = train_dpo(ref, data, cfg, RngStream(2, "dpo"));
  double margin =
      implicit_reward(result.policy, ref, data[0].prompt, data[0].chosen,
                      cfg.beta) -
      implicit_reward(result.policy, ref, data[0].prompt, data[0].rejected,
                      cfg.beta);
  CHECK(margin > 0.0);
  CHECK(dpo_loss(result.policy, ref, data[0], cfg.beta) < 0.1);
}

TEST_CASE("train_dpo: the reference parameters never move") {
  Vocab vocab{16};
  TaskSpec task = make_task(vocab, RngStream(17, "task"));
  PreferenceDataset data = gen_preference_dataset(task, 40, AnnotatorConfig{},
                                                  RngStream(17, "pref"));
  ToyLMParams ref = random_lm(vocab, 2, 17);
  std::vector<double> ref_before = ref.data;
  DPOConfig cfg;
  cfg.epochs = 2;
  cfg.step_budget = 0;
  DPOResult result = train_dpo(ref, data, cfg, RngStream(3, "dpo"));
  CHECK(ref.data == ref_before);
  CHECK(result.policy.data != ref.data);
  // holdout metrics exist for both splits each epoch
  int holdout_rows = 0;
  for (const auto& row : result.trace) {
    if (row.split == "holdout") ++holdout_rows;
  }
  CHECK(holdout_rows == cfg.epochs);
}
