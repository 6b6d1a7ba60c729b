#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "rsdpo/reward.hpp"
#include "rsdpo/rng.hpp"
#include "rsdpo/toylm.hpp"

namespace rsdpo {

struct ScoredResponse {
  Tokens response;
  double reward = 0.0;
};

struct CandidateSet {
  Tokens prompt;
  std::vector<ScoredResponse> scored;
};

struct PDGRSConfig {
  double temperature = 1.0;  // tau
  double threshold = 0.85;   // eta

  // Returns a warning string for legal-but-degenerate settings (eta <= 0.5
  // admits both orderings of a pair); throws on invalid ones.
  std::optional<std::string> validate() const;
};

// sigma((r_hi - r_lo) / tau), stable logistic evaluation.
double reward_gap_sigma(double r_hi, double r_lo, double tau);

// All ordered pairs (j, l), j != l, whose gap sigma exceeds the threshold,
// emitted in lexicographic (j, l) order as (x, y_l, y_w = response j).
// Identical token sequences never pair up (their gap is exactly 0.5, and a
// triple with chosen == rejected is invalid anyway).
std::vector<PreferenceTriple> pdgrs_pairs(const CandidateSet& cands,
                                          const PDGRSConfig& cfg);

struct PDGRSRun {
  PreferenceDataset dataset;            // concatenated in prompt order
  std::vector<CandidateSet> candidates; // per-prompt responses and rewards
};

// Full Algorithm-1 pass: sample k responses per prompt from the SFT policy,
// score each with the reward model, keep pairs above the threshold.
// prompt_workers > 1 runs per-prompt generation in parallel; results do not
// depend on the schedule.
PDGRSRun run_pdgrs(const ToyLMParams& sft, const RewardModelParams& rm,
                   const std::vector<Tokens>& prompts,
                   const GenerationConfig& gen, const PDGRSConfig& cfg,
                   const RngStream& rng, int prompt_workers = 1);

// Scores pre-generated responses; the generation half of run_pdgrs.
std::vector<CandidateSet> score_candidates(
    const ToyLMParams& sft, const RewardModelParams& rm,
    const std::vector<Tokens>& prompts, const GenerationConfig& gen,
    const RngStream& rng, int prompt_workers = 1);

// Highest vs lowest reward; ties break toward the lower index. Empty when the
// two picks coincide or the picked responses are identical token sequences.
std::optional<PreferenceTriple> select_best_vs_worst(const CandidateSet& c);

// Highest reward vs a uniform draw from the other k-1.
std::optional<PreferenceTriple> select_best_vs_random(const CandidateSet& c,
                                                      RngStream rng);

// Highest-reward response as a (prompt, response) record for 1-step SFT.
SFTRecord select_rs_best(const CandidateSet& c);

// Uniform subsample without replacement; n <= dataset size.
PreferenceDataset subsample(const PreferenceDataset& data, size_t n,
                            RngStream rng);

}  // namespace rsdpo
