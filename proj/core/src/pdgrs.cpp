#include "rsdpo/pdgrs.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "rsdpo/parallel.hpp"

namespace rsdpo {

std::optional<std::string> PDGRSConfig::validate() const {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("PDGRSConfig: temperature must be > 0");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("PDGRSConfig: threshold in (0, 1)");
  }
  if (threshold <= 0.5) {
    return "threshold <= 0.5 admits both orderings of a pair, including "
           "contradictory labels";
  }
  return std::nullopt;
}

double reward_gap_sigma(double r_hi, double r_lo, double tau) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument("reward_gap_sigma: tau must be > 0");
  }
  if (!std::isfinite(r_hi) || !std::isfinite(r_lo)) {
    throw std::invalid_argument("reward_gap_sigma: non-finite reward");
  }
  return bt_probability(r_hi / tau, r_lo / tau);
}

std::vector<PreferenceTriple> pdgrs_pairs(const CandidateSet& cands,
                                          const PDGRSConfig& cfg) {
  cfg.validate();
  size_t k = cands.scored.size();
  if (k < 2) throw std::invalid_argument("pdgrs_pairs: need k >= 2");
  std::vector<PreferenceTriple> out;
  for (size_t j = 0; j < k; ++j) {
    for (size_t l = 0; l < k; ++l) {
      if (j == l) continue;
      double gap = reward_gap_sigma(cands.scored[j].reward,
                                    cands.scored[l].reward, cfg.temperature);
      if (gap > cfg.threshold &&
          cands.scored[j].response != cands.scored[l].response) {
        out.push_back({cands.prompt, cands.scored[j].response,
                       cands.scored[l].response, gap});
      }
    }
  }
  return out;
}

std::vector<CandidateSet> score_candidates(
    const ToyLMParams& sft, const RewardModelParams& rm,
    const std::vector<Tokens>& prompts, const GenerationConfig& gen,
    const RngStream& rng, int prompt_workers) {
  if (prompts.empty()) {
    throw std::invalid_argument("score_candidates: no prompts");
  }
  std::vector<CandidateSet> sets(prompts.size());
  parallel_for(prompts.size(), prompt_workers, [&](size_t i) {
    try {
      CandidateSet& set = sets[i];
      set.prompt = prompts[i];
      std::vector<Tokens> responses =
          sample_k_responses(sft, prompts[i], gen, rng.child(i));
      set.scored.reserve(responses.size());
      for (auto& resp : responses) {
        double r = reward_score(rm, prompts[i], resp);
        set.scored.push_back({std::move(resp), r});
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("prompt " + std::to_string(i) + ": " +
                               e.what());
    }
  });
  return sets;
}

PDGRSRun run_pdgrs(const ToyLMParams& sft, const RewardModelParams& rm,
                   const std::vector<Tokens>& prompts,
                   const GenerationConfig& gen, const PDGRSConfig& cfg,
                   const RngStream& rng, int prompt_workers) {
  cfg.validate();
  PDGRSRun run;
  run.candidates =
      score_candidates(sft, rm, prompts, gen, rng, prompt_workers);
  for (const auto& set : run.candidates) {
    auto triples = pdgrs_pairs(set, cfg);
    run.dataset.insert(run.dataset.end(),
                       std::make_move_iterator(triples.begin()),
                       std::make_move_iterator(triples.end()));
  }
  return run;
}

namespace {

size_t argmax_reward(const CandidateSet& c) {
  size_t best = 0;
  for (size_t i = 1; i < c.scored.size(); ++i) {
    if (c.scored[i].reward > c.scored[best].reward) best = i;
  }
  return best;
}

size_t argmin_reward(const CandidateSet& c) {
  size_t worst = 0;
  for (size_t i = 1; i < c.scored.size(); ++i) {
    if (c.scored[i].reward < c.scored[worst].reward) worst = i;
  }
  return worst;
}

}  // namespace

std::optional<PreferenceTriple> select_best_vs_worst(const CandidateSet& c) {
  if (c.scored.size() < 2) {
    throw std::invalid_argument("select_best_vs_worst: need k >= 2");
  }
  size_t w = argmax_reward(c);
  size_t l = argmin_reward(c);
  if (w == l || c.scored[w].response == c.scored[l].response) {
    return std::nullopt;
  }
  return PreferenceTriple{c.prompt, c.scored[w].response, c.scored[l].response,
                          std::nullopt};
}

std::optional<PreferenceTriple> select_best_vs_random(const CandidateSet& c,
                                                      RngStream rng) {
  if (c.scored.size() < 2) {
    throw std::invalid_argument("select_best_vs_random: need k >= 2");
  }
  size_t w = argmax_reward(c);
  size_t l = rng.next_index(c.scored.size() - 1);
  if (l >= w) ++l;
  if (c.scored[w].response == c.scored[l].response) return std::nullopt;
  return PreferenceTriple{c.prompt, c.scored[w].response, c.scored[l].response,
                          std::nullopt};
}

SFTRecord select_rs_best(const CandidateSet& c) {
  if (c.scored.empty()) {
    throw std::invalid_argument("select_rs_best: empty candidate set");
  }
  return {c.prompt, c.scored[argmax_reward(c)].response};
}

PreferenceDataset subsample(const PreferenceDataset& data, size_t n,
                            RngStream rng) {
  if (n > data.size()) {
    throw std::invalid_argument("subsample: n exceeds dataset size");
  }
  std::vector<size_t> idx(data.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Partial Fisher-Yates: the first n slots end up a uniform sample.
  for (size_t i = 0; i < n; ++i) {
    size_t j = i + rng.next_index(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  PreferenceDataset out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) out.push_back(data[idx[i]]);
  return out;
}

}  // namespace rsdpo
