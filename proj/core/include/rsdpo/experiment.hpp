#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rsdpo/dpo.hpp"
#include "rsdpo/manifest.hpp"
#include "rsdpo/optim.hpp"
#include "rsdpo/pdgrs.hpp"
#include "rsdpo/reward.hpp"
#include "rsdpo/synthdata.hpp"
#include "rsdpo/toylm.hpp"

namespace rsdpo {

inline const std::vector<std::string> kPolicyNames = {
    "proposed",     "best-vs-worst",      "best-vs-random",
    "original-annotation", "rejection-sampling", "sft-only"};

// Everything a pipeline run needs, resolved from JSON + defaults.
// RSDPO_SEED and RSDPO_OUT environment variables override seed and out_dir.
struct ExperimentConfig {
  uint64_t seed = 1;
  std::filesystem::path out_dir = "runs/run";

  int vocab_size = 32;
  int context_len = 3;

  // task
  int min_prompt_len = 4;
  int max_prompt_len = 10;
  double length_penalty = 0.5;
  double chain_noise = 0.2;

  AnnotatorConfig annotator;

  // dataset sizes
  size_t sft_pairs = 500;
  size_t preference_prompts = 200;
  size_t eval_prompts = 1000;

  GenerationConfig generation;
  PDGRSConfig pdgrs;

  SFTTrainConfig sft_train{40, 16, {ScheduleKind::Linear, 5e-2, 0, 0}, 0.0};
  RMTrainConfig rm_train{12, 16, {ScheduleKind::Linear, 5e-2, 0, 0}, 150};
  DPOConfig dpo;

  std::string policy = "proposed";
  std::string rm_variant = "rich";  // "rich" | "narrow"
  // the rich variant trains on its own large synthetic preference set; the
  // narrow variant on a small subset of the annotated one
  size_t rm_rich_triples = 1000;
  double narrow_fraction = 0.1;
  size_t subsample_to = 0;  // 0: off; otherwise cap D_P before DPO
  int threads = 1;

  void validate() const;
  std::string config_hash() const;
  std::string to_json_string() const;

  static ExperimentConfig from_json_file(const std::filesystem::path& path);
  static ExperimentConfig from_json_string(const std::string& text);
  // Applies RSDPO_SEED / RSDPO_OUT when set.
  void apply_env_overrides();

  Vocab vocab() const { return Vocab{vocab_size}; }
};

// Stage entry points shared by the CLI subcommands and the preset runner.
// Each reads/writes artifacts under cfg.out_dir and appends to the manifest.
void stage_synth(const ExperimentConfig& cfg, RunManifest& manifest);
void stage_sft(const ExperimentConfig& cfg, RunManifest& manifest);
void stage_rm(const ExperimentConfig& cfg, RunManifest& manifest);
void stage_generate(const ExperimentConfig& cfg, RunManifest& manifest);
void stage_pdgrs(const ExperimentConfig& cfg, RunManifest& manifest);
void stage_select(const ExperimentConfig& cfg, RunManifest& manifest);
void stage_dpo(const ExperimentConfig& cfg, RunManifest& manifest);
void stage_rs_sft(const ExperimentConfig& cfg, RunManifest& manifest);
WinRate stage_eval(const ExperimentConfig& cfg, RunManifest& manifest);

// Artifact names under out_dir.
namespace artifact {
inline constexpr const char* kTask = "task.json";
inline constexpr const char* kSFTData = "sft_data.jsonl";
inline constexpr const char* kPrefData = "pref_data.jsonl";
inline constexpr const char* kEvalPrompts = "eval_prompts.jsonl";
inline constexpr const char* kSFTModel = "sft_model.ckpt";
inline constexpr const char* kSFTMetrics = "sft_metrics.jsonl";
inline constexpr const char* kRMRich = "rm_rich.ckpt";
inline constexpr const char* kRMNarrow = "rm_narrow.ckpt";
inline constexpr const char* kGeneration = "gen.jsonl";
inline constexpr const char* kPolicyData = "dp.jsonl";
inline constexpr const char* kRSData = "rs_sft.jsonl";
inline constexpr const char* kPolicyModel = "policy_model.ckpt";
inline constexpr const char* kDPOMetrics = "dpo_metrics.jsonl";
inline constexpr const char* kDPOCurves = "dpo_curves.csv";
inline constexpr const char* kWinRate = "winrate.json";
inline constexpr const char* kHistogram = "histogram.csv";
inline constexpr const char* kResults = "results.csv";
}  // namespace artifact

std::filesystem::path rm_checkpoint_path(const ExperimentConfig& cfg);

// Reward-gap histogram (sigma-transformed, winning orientation, binned over
// [0.5, 1]) with mean/stddev annotations and the threshold line value.
struct HistogramResult {
  std::vector<long> counts;
  double bin_lo = 0.5;
  double bin_hi = 1.0;
  double mean = 0.0;
  double stddev = 0.0;
  double eta = 0.0;
  double tau = 0.0;
  size_t total_pairs = 0;
};

HistogramResult reward_gap_histogram(
    const std::vector<CandidateSet>& candidates, const PDGRSConfig& cfg,
    int bins = 50);
void save_histogram_csv(const std::filesystem::path& path,
                        const HistogramResult& hist);

// One (policy, rm_variant, seed) pipeline outcome; a row of the results
// table.
struct ExperimentRow {
  std::string policy;
  std::string rm_variant;
  uint64_t seed = 0;
  size_t sample_size = 0;
  std::optional<double> eta;
  std::optional<double> tau;
  double win_rate = 0.0;
  double win_rate_stderr = 0.0;
  std::optional<double> dpo_reward_accuracy;
  std::optional<double> dpo_reward_margin;
};

// Runs the full stage DAG for one configuration and returns its row.
ExperimentRow run_pipeline(const ExperimentConfig& cfg);

struct Preset {
  std::string name;
  std::vector<ExperimentConfig> runs;
};

// Presets reproduce the ablation grids; base settings come from cfg and the
// preset overrides policy/eta/tau/rm_variant/seed per run.
Preset make_preset(const std::string& name, const ExperimentConfig& base);
std::vector<std::string> preset_names();

std::vector<ExperimentRow> run_preset(const Preset& preset);
void save_results_csv(const std::filesystem::path& path,
                      const std::vector<ExperimentRow>& rows);

}  // namespace rsdpo
