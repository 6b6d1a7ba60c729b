// Pipeline driver: one subcommand per stage plus preset experiment grids.
// Exit codes: 0 success, 2 validation error, 1 runtime failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rsdpo/experiment.hpp"
#include "rsdpo/serialize.hpp"

namespace {

using rsdpo::ExperimentConfig;
using rsdpo::RunManifest;

struct CommonArgs {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON experiment config");
  cmd->add_option("--seed", args.seed, "global seed (overrides config)");
  cmd->add_option("--out", args.out_dir, "output directory");
}

ExperimentConfig resolve_config(const CommonArgs& args) {
  ExperimentConfig cfg;
  if (!args.config_path.empty()) {
    cfg = ExperimentConfig::from_json_file(args.config_path);
  }
  cfg.apply_env_overrides();
  if (args.seed) cfg.seed = *args.seed;
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  cfg.validate();
  return cfg;
}

int run_stage(const CommonArgs& args,
              void (*stage)(const ExperimentConfig&, RunManifest&)) {
  ExperimentConfig cfg = resolve_config(args);
  RunManifest manifest(cfg.out_dir);
  stage(cfg, manifest);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale RLHF pipeline: SFT, reward modeling, rejection-"
               "sampled preference generation, and DPO alignment"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string preset_name = "default";
  std::string policy_override;

  auto* synth = app.add_subcommand(
      "synth", "generate the task spec and synthetic datasets");
  add_common(synth, args);
  auto* sft = app.add_subcommand("sft", "train the SFT policy model");
  add_common(sft, args);
  auto* rm = app.add_subcommand("rm", "train the reward model");
  add_common(rm, args);
  auto* generate = app.add_subcommand(
      "generate", "sample k responses per prompt and score them");
  add_common(generate, args);
  auto* pdgrs = app.add_subcommand(
      "pdgrs", "build preference pairs by thresholded reward gaps");
  add_common(pdgrs, args);
  auto* select = app.add_subcommand(
      "select", "build preference data with a baseline selection policy");
  add_common(select, args);
  select->add_option("--policy", policy_override,
                     "selection policy (overrides config)");
  auto* dpo = app.add_subcommand("dpo", "align the policy with DPO");
  add_common(dpo, args);
  auto* rs_sft = app.add_subcommand(
      "rs-sft", "1-step SFT on the best-of-k responses");
  add_common(rs_sft, args);
  auto* eval = app.add_subcommand(
      "eval", "oracle-judged win rate against the SFT baseline");
  add_common(eval, args);
  auto* histogram = app.add_subcommand(
      "histogram", "reward-gap histogram from a generation artifact");
  add_common(histogram, args);
  auto* experiment = app.add_subcommand(
      "experiment", "run a preset ablation grid and write results.csv");
  add_common(experiment, args);
  experiment->add_option("--preset", preset_name, "preset name")
      ->check(CLI::IsMember(rsdpo::preset_names()));

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return run_stage(args, rsdpo::stage_synth);
    if (sft->parsed()) return run_stage(args, rsdpo::stage_sft);
    if (rm->parsed()) return run_stage(args, rsdpo::stage_rm);
    if (generate->parsed()) return run_stage(args, rsdpo::stage_generate);
    if (pdgrs->parsed()) return run_stage(args, rsdpo::stage_pdgrs);
    if (select->parsed()) {
      ExperimentConfig cfg = resolve_config(args);
      if (!policy_override.empty()) cfg.policy = policy_override;
      cfg.validate();
      RunManifest manifest(cfg.out_dir);
      rsdpo::stage_select(cfg, manifest);
      return 0;
    }
    if (dpo->parsed()) return run_stage(args, rsdpo::stage_dpo);
    if (rs_sft->parsed()) return run_stage(args, rsdpo::stage_rs_sft);
    if (eval->parsed()) {
      ExperimentConfig cfg = resolve_config(args);
      RunManifest manifest(cfg.out_dir);
      rsdpo::WinRate wr = rsdpo::stage_eval(cfg, manifest);
      std::cout << "win_rate " << wr.rate << " stderr " << wr.stderr_
                << " n " << wr.n << '\n';
      return 0;
    }
    if (histogram->parsed()) {
      ExperimentConfig cfg = resolve_config(args);
      auto gen_path = cfg.out_dir / rsdpo::artifact::kGeneration;
      auto candidates = rsdpo::load_generation_jsonl(gen_path, cfg.vocab());
      auto hist = rsdpo::reward_gap_histogram(candidates, cfg.pdgrs);
      auto out_path = cfg.out_dir / rsdpo::artifact::kHistogram;
      rsdpo::save_histogram_csv(out_path, hist);
      std::cout << "histogram written to " << out_path.string() << '\n';
      return 0;
    }
    if (experiment->parsed()) {
      ExperimentConfig cfg = resolve_config(args);
      rsdpo::Preset preset = rsdpo::make_preset(preset_name, cfg);
      std::vector<rsdpo::ExperimentRow> rows = rsdpo::run_preset(preset);
      auto out_path = cfg.out_dir / rsdpo::artifact::kResults;
      rsdpo::save_results_csv(out_path, rows);
      std::cout << "results written to " << out_path.string() << '\n';
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
