#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rsdpo/dpo.hpp"
#include "rsdpo/optim.hpp"
#include "rsdpo/pdgrs.hpp"
#include "rsdpo/reward.hpp"
#include "rsdpo/synthdata.hpp"
#include "rsdpo/toylm.hpp"

namespace rsdpo {

// Checkpoints: 8-byte magic, version byte, kind byte ('L' policy / 'R'
// reward), u32 V, u32 c, then the flat parameter vector as little-endian
// IEEE doubles.
void save_lm_checkpoint(const std::filesystem::path& path,
                        const ToyLMParams& params);
ToyLMParams load_lm_checkpoint(const std::filesystem::path& path);
void save_rm_checkpoint(const std::filesystem::path& path,
                        const RewardModelParams& params);
RewardModelParams load_rm_checkpoint(const std::filesystem::path& path);

// SFT data: one {"prompt": [...], "response": [...]} object per line.
void save_sft_jsonl(const std::filesystem::path& path, const SFTDataset& data);
SFTDataset load_sft_jsonl(const std::filesystem::path& path,
                          const Vocab& vocab);

// Preference data: {"prompt", "chosen", "rejected"} with optional
// "gap_sigma".
void save_preference_jsonl(const std::filesystem::path& path,
                           const PreferenceDataset& data);
PreferenceDataset load_preference_jsonl(const std::filesystem::path& path,
                                        const Vocab& vocab);

// Generation artifact: {"prompt_id", "prompt", "responses": [{"tokens",
// "reward"}]} per prompt.
void save_generation_jsonl(const std::filesystem::path& path,
                           const std::vector<CandidateSet>& candidates);
std::vector<CandidateSet> load_generation_jsonl(
    const std::filesystem::path& path, const Vocab& vocab);

void save_task_json(const std::filesystem::path& path, const TaskSpec& task);
TaskSpec load_task_json(const std::filesystem::path& path);

// Metrics JSONL writers ({step, lr, loss} and
// {epoch, split, loss, reward_accuracy, reward_margin}).
void save_step_metrics_jsonl(const std::filesystem::path& path,
                             const std::vector<StepMetric>& trace);
void save_dpo_metrics_jsonl(const std::filesystem::path& path,
                            const std::vector<DPOEpochMetric>& trace);
void save_dpo_metrics_csv(const std::filesystem::path& path,
                          const std::vector<DPOEpochMetric>& trace);

// FNV-1a over the file bytes, as a fixed-width hex string.
std::string file_checksum(const std::filesystem::path& path);
uint64_t fnv1a64(const void* data, size_t size);

std::vector<Tokens> load_prompts_jsonl(const std::filesystem::path& path,
                                       const Vocab& vocab);
void save_prompts_jsonl(const std::filesystem::path& path,
                        const std::vector<Tokens>& prompts);

}  // namespace rsdpo
