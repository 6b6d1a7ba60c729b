#include "rsdpo/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "rsdpo/serialize.hpp"

namespace rsdpo {

using nlohmann::json;

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(std::string("config field '") + key +
                                "' has the wrong type");
  }
}

void read_schedule(const json& j, const char* key, ScheduleSpec& out) {
  if (!j.contains(key)) return;
  const json& s = j.at(key);
  std::string kind = to_string(out.kind);
  read_field(s, "kind", kind);
  out.kind = schedule_kind_from_string(kind);
  read_field(s, "base_lr", out.base_lr);
  read_field(s, "total_steps", out.total_steps);
  read_field(s, "warmup_steps", out.warmup_steps);
}

json schedule_to_json(const ScheduleSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"base_lr", s.base_lr},
          {"total_steps", s.total_steps},
          {"warmup_steps", s.warmup_steps}};
}

TaskSpec task_from_config(const ExperimentConfig& cfg) {
  TaskSpec task = make_task(cfg.vocab(), RngStream(cfg.seed, "task"));
  task.min_prompt_len = cfg.min_prompt_len;
  task.max_prompt_len = cfg.max_prompt_len;
  task.length_penalty = cfg.length_penalty;
  task.chain_noise = cfg.chain_noise;
  task.validate();
  return task;
}

std::filesystem::path art(const ExperimentConfig& cfg, const char* name) {
  return cfg.out_dir / name;
}

std::vector<Tokens> prompts_of(const PreferenceDataset& data) {
  std::vector<Tokens> prompts;
  prompts.reserve(data.size());
  for (const auto& t : data) prompts.push_back(t.prompt);
  return prompts;
}

}  // namespace

void ExperimentConfig::validate() const {
  Vocab v = vocab();
  v.validate();
  if (context_len < 1) {
    throw std::invalid_argument("config: context_len must be positive");
  }
  annotator.validate();
  generation.validate();
  pdgrs.validate();
  dpo.validate();
  if (sft_pairs == 0 || preference_prompts == 0 || eval_prompts == 0) {
    throw std::invalid_argument("config: dataset sizes must be positive");
  }
  if (std::find(kPolicyNames.begin(), kPolicyNames.end(), policy) ==
      kPolicyNames.end()) {
    throw std::invalid_argument("config: unknown policy '" + policy + "'");
  }
  if (rm_variant != "rich" && rm_variant != "narrow") {
    throw std::invalid_argument("config: rm_variant must be rich or narrow");
  }
  if (!(narrow_fraction > 0.0 && narrow_fraction <= 1.0)) {
    throw std::invalid_argument("config: narrow_fraction in (0, 1]");
  }
  if (threads < 1) throw std::invalid_argument("config: threads >= 1");
}

std::string ExperimentConfig::to_json_string() const {
  json j{
      {"seed", seed},
      {"out_dir", out_dir.string()},
      {"vocab_size", vocab_size},
      {"context_len", context_len},
      {"task",
       {{"min_prompt_len", min_prompt_len},
        {"max_prompt_len", max_prompt_len},
        {"length_penalty", length_penalty},
        {"chain_noise", chain_noise}}},
      {"annotator",
       {{"flip_prob", annotator.flip_prob},
        {"corruption_rate", annotator.corruption_rate}}},
      {"data",
       {{"sft_pairs", sft_pairs},
        {"preference_prompts", preference_prompts},
        {"eval_prompts", eval_prompts}}},
      {"generation",
       {{"k", generation.k},
        {"max_new_tokens", generation.max_new_tokens},
        {"top_k", generation.top_k},
        {"top_p", generation.top_p},
        {"temperature", generation.sampling_temperature}}},
      {"pdgrs",
       {{"temperature", pdgrs.temperature}, {"threshold", pdgrs.threshold}}},
      {"sft_train",
       {{"epochs", sft_train.epochs},
        {"batch_size", sft_train.batch_size},
        {"schedule", schedule_to_json(sft_train.schedule)},
        {"weight_decay", sft_train.weight_decay}}},
      {"rm_train",
       {{"epochs", rm_train.epochs},
        {"batch_size", rm_train.batch_size},
        {"schedule", schedule_to_json(rm_train.schedule)},
        {"min_steps", rm_train.min_steps}}},
      {"dpo",
       {{"beta", dpo.beta},
        {"epochs", dpo.epochs},
        {"batch_size", dpo.batch_size},
        {"schedule", schedule_to_json(dpo.schedule)},
        {"holdout_frac", dpo.holdout_frac},
        {"step_budget", dpo.step_budget}}},
      {"policy", policy},
      {"rm_variant", rm_variant},
      {"rm_rich_triples", rm_rich_triples},
      {"narrow_fraction", narrow_fraction},
      {"subsample_to", subsample_to},
      {"threads", threads},
  };
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") +
                                e.what());
  }
  ExperimentConfig cfg;
  read_field(j, "seed", cfg.seed);
  std::string out;
  read_field(j, "out_dir", out);
  if (!out.empty()) cfg.out_dir = out;
  read_field(j, "vocab_size", cfg.vocab_size);
  read_field(j, "context_len", cfg.context_len);
  if (j.contains("task")) {
    const json& t = j.at("task");
    read_field(t, "min_prompt_len", cfg.min_prompt_len);
    read_field(t, "max_prompt_len", cfg.max_prompt_len);
    read_field(t, "length_penalty", cfg.length_penalty);
    read_field(t, "chain_noise", cfg.chain_noise);
  }
  if (j.contains("annotator")) {
    const json& a = j.at("annotator");
    read_field(a, "flip_prob", cfg.annotator.flip_prob);
    read_field(a, "corruption_rate", cfg.annotator.corruption_rate);
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    read_field(d, "sft_pairs", cfg.sft_pairs);
    read_field(d, "preference_prompts", cfg.preference_prompts);
    read_field(d, "eval_prompts", cfg.eval_prompts);
  }
  if (j.contains("generation")) {
    const json& g = j.at("generation");
    read_field(g, "k", cfg.generation.k);
    read_field(g, "max_new_tokens", cfg.generation.max_new_tokens);
    read_field(g, "top_k", cfg.generation.top_k);
    read_field(g, "top_p", cfg.generation.top_p);
    read_field(g, "temperature", cfg.generation.sampling_temperature);
  }
  if (j.contains("pdgrs")) {
    const json& p = j.at("pdgrs");
    read_field(p, "temperature", cfg.pdgrs.temperature);
    read_field(p, "threshold", cfg.pdgrs.threshold);
  }
  if (j.contains("sft_train")) {
    const json& s = j.at("sft_train");
    read_field(s, "epochs", cfg.sft_train.epochs);
    read_field(s, "batch_size", cfg.sft_train.batch_size);
    read_schedule(s, "schedule", cfg.sft_train.schedule);
    read_field(s, "weight_decay", cfg.sft_train.weight_decay);
  }
  if (j.contains("rm_train")) {
    const json& r = j.at("rm_train");
    read_field(r, "epochs", cfg.rm_train.epochs);
    read_field(r, "batch_size", cfg.rm_train.batch_size);
    read_schedule(r, "schedule", cfg.rm_train.schedule);
    read_field(r, "min_steps", cfg.rm_train.min_steps);
  }
  if (j.contains("dpo")) {
    const json& d = j.at("dpo");
    read_field(d, "beta", cfg.dpo.beta);
    read_field(d, "epochs", cfg.dpo.epochs);
    read_field(d, "batch_size", cfg.dpo.batch_size);
    read_schedule(d, "schedule", cfg.dpo.schedule);
    read_field(d, "holdout_frac", cfg.dpo.holdout_frac);
    read_field(d, "step_budget", cfg.dpo.step_budget);
  }
  read_field(j, "policy", cfg.policy);
  read_field(j, "rm_variant", cfg.rm_variant);
  read_field(j, "rm_rich_triples", cfg.rm_rich_triples);
  read_field(j, "narrow_fraction", cfg.narrow_fraction);
  read_field(j, "subsample_to", cfg.subsample_to);
  read_field(j, "threads", cfg.threads);
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("missing config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_string(buf.str());
}

void ExperimentConfig::apply_env_overrides() {
  if (const char* s = std::getenv("RSDPO_SEED")) {
    seed = std::strtoull(s, nullptr, 10);
  }
  if (const char* o = std::getenv("RSDPO_OUT")) {
    out_dir = o;
  }
}

std::string ExperimentConfig::config_hash() const {
  std::string text = to_json_string();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(text.data(), text.size())));
  return buf;
}

std::filesystem::path rm_checkpoint_path(const ExperimentConfig& cfg) {
  return art(cfg, cfg.rm_variant == "narrow" ? artifact::kRMNarrow
                                             : artifact::kRMRich);
}

namespace {

void require_artifact(const std::filesystem::path& p, const char* produced_by) {
  if (!std::filesystem::exists(p)) {
    throw std::invalid_argument("missing artifact " + p.string() +
                                " (produce it with '" + produced_by + "')");
  }
}

}  // namespace

void stage_synth(const ExperimentConfig& cfg, RunManifest& manifest) {
  cfg.validate();
  StageTimer timer(manifest, "synth", cfg.config_hash());
  TaskSpec task = task_from_config(cfg);
  save_task_json(art(cfg, artifact::kTask), task);

  SFTDataset sft = gen_sft_dataset(task, cfg.sft_pairs, cfg.annotator,
                                   RngStream(cfg.seed, "sft_data"));
  save_sft_jsonl(art(cfg, artifact::kSFTData), sft);

  PreferenceDataset pref =
      gen_preference_dataset(task, cfg.preference_prompts, cfg.annotator,
                             RngStream(cfg.seed, "pref_data"));
  save_preference_jsonl(art(cfg, artifact::kPrefData), pref);

  std::vector<Tokens> eval_prompts =
      gen_prompts(task, cfg.eval_prompts, RngStream(cfg.seed, "eval_prompts"));
  save_prompts_jsonl(art(cfg, artifact::kEvalPrompts), eval_prompts);

  timer.add_output(art(cfg, artifact::kTask));
  timer.add_output(art(cfg, artifact::kSFTData));
  timer.add_output(art(cfg, artifact::kPrefData));
  timer.add_output(art(cfg, artifact::kEvalPrompts));
  timer.commit();
}

void stage_sft(const ExperimentConfig& cfg, RunManifest& manifest) {
  cfg.validate();
  require_artifact(art(cfg, artifact::kSFTData), "synth");
  StageTimer timer(manifest, "sft", cfg.config_hash());
  timer.add_input(art(cfg, artifact::kSFTData));

  SFTDataset data = load_sft_jsonl(art(cfg, artifact::kSFTData), cfg.vocab());
  ToyLMParams init = ToyLMParams::zeros(cfg.vocab(), cfg.context_len);
  SFTResult result =
      train_sft(init, data, cfg.sft_train, RngStream(cfg.seed, "sft_train"));
  save_lm_checkpoint(art(cfg, artifact::kSFTModel), result.params);
  save_step_metrics_jsonl(art(cfg, artifact::kSFTMetrics), result.trace);

  timer.add_output(art(cfg, artifact::kSFTModel));
  timer.add_output(art(cfg, artifact::kSFTMetrics));
  timer.commit();
}

void stage_rm(const ExperimentConfig& cfg, RunManifest& manifest) {
  cfg.validate();
  require_artifact(art(cfg, artifact::kPrefData), "synth");
  require_artifact(art(cfg, artifact::kTask), "synth");
  StageTimer timer(manifest, "rm", cfg.config_hash());
  timer.add_input(art(cfg, artifact::kPrefData));
  timer.add_input(art(cfg, artifact::kTask));

  PreferenceDataset data =
      load_preference_jsonl(art(cfg, artifact::kPrefData), cfg.vocab());
  if (cfg.rm_variant == "narrow") {
    size_t n = std::max<size_t>(
        1, static_cast<size_t>(std::floor(cfg.narrow_fraction *
                                          static_cast<double>(data.size()))));
    data = subsample(data, n, RngStream(cfg.seed, "rm_narrow_subset"));
  } else {
    TaskSpec task = load_task_json(art(cfg, artifact::kTask));
    data = gen_preference_dataset(task, cfg.rm_rich_triples, cfg.annotator,
                                  RngStream(cfg.seed, "rm_rich_data"));
  }
  RewardModelParams init =
      RewardModelParams::zeros(cfg.vocab(), cfg.context_len);
  RMResult result =
      train_rm(init, data, cfg.rm_train, RngStream(cfg.seed, "rm_train"));
  save_rm_checkpoint(rm_checkpoint_path(cfg), result.params);

  timer.add_output(rm_checkpoint_path(cfg));
  timer.commit();
}

void stage_generate(const ExperimentConfig& cfg, RunManifest& manifest) {
  cfg.validate();
  require_artifact(art(cfg, artifact::kSFTModel), "sft");
  require_artifact(art(cfg, artifact::kPrefData), "synth");
  require_artifact(rm_checkpoint_path(cfg), "rm");
  StageTimer timer(manifest, "generate", cfg.config_hash());
  timer.add_input(art(cfg, artifact::kSFTModel));
  timer.add_input(art(cfg, artifact::kPrefData));
  timer.add_input(rm_checkpoint_path(cfg));

  ToyLMParams sft = load_lm_checkpoint(art(cfg, artifact::kSFTModel));
  RewardModelParams rm = load_rm_checkpoint(rm_checkpoint_path(cfg));
  PreferenceDataset pref =
      load_preference_jsonl(art(cfg, artifact::kPrefData), cfg.vocab());
  std::vector<CandidateSet> candidates =
      score_candidates(sft, rm, prompts_of(pref), cfg.generation,
                       RngStream(cfg.seed, "gen"), cfg.threads);
  save_generation_jsonl(art(cfg, artifact::kGeneration), candidates);

  timer.add_output(art(cfg, artifact::kGeneration));
  timer.commit();
}

void stage_pdgrs(const ExperimentConfig& cfg, RunManifest& manifest) {
  cfg.validate();
  require_artifact(art(cfg, artifact::kGeneration), "generate");
  StageTimer timer(manifest, "pdgrs", cfg.config_hash());
  timer.add_input(art(cfg, artifact::kGeneration));

  if (auto warning = cfg.pdgrs.validate()) {
    std::cerr << "warning: " << *warning << '\n';
  }
  std::vector<CandidateSet> candidates =
      load_generation_jsonl(art(cfg, artifact::kGeneration), cfg.vocab());
  PreferenceDataset dataset;
  for (const auto& set : candidates) {
    auto triples = pdgrs_pairs(set, cfg.pdgrs);
    dataset.insert(dataset.end(), triples.begin(), triples.end());
  }
  save_preference_jsonl(art(cfg, artifact::kPolicyData), dataset);

  timer.add_output(art(cfg, artifact::kPolicyData));
  timer.commit();
}

void stage_select(const ExperimentConfig& cfg, RunManifest& manifest) {
  cfg.validate();
  StageTimer timer(manifest, "select", cfg.config_hash());

  if (cfg.policy == "original-annotation") {
    require_artifact(art(cfg, artifact::kPrefData), "synth");
    timer.add_input(art(cfg, artifact::kPrefData));
    PreferenceDataset pref =
        load_preference_jsonl(art(cfg, artifact::kPrefData), cfg.vocab());
    save_preference_jsonl(art(cfg, artifact::kPolicyData), pref);
    timer.add_output(art(cfg, artifact::kPolicyData));
    timer.commit();
    return;
  }

  require_artifact(art(cfg, artifact::kGeneration), "generate");
  timer.add_input(art(cfg, artifact::kGeneration));
  std::vector<CandidateSet> candidates =
      load_generation_jsonl(art(cfg, artifact::kGeneration), cfg.vocab());

  if (cfg.policy == "rejection-sampling") {
    SFTDataset best;
    best.reserve(candidates.size());
    for (const auto& set : candidates) best.push_back(select_rs_best(set));
    save_sft_jsonl(art(cfg, artifact::kRSData), best);
    timer.add_output(art(cfg, artifact::kRSData));
    timer.commit();
    return;
  }

  PreferenceDataset dataset;
  size_t skipped = 0;
  RngStream random_stream(cfg.seed, "select_random");
  for (size_t i = 0; i < candidates.size(); ++i) {
    std::optional<PreferenceTriple> triple;
    if (cfg.policy == "best-vs-worst") {
      triple = select_best_vs_worst(candidates[i]);
    } else if (cfg.policy == "best-vs-random") {
      triple = select_best_vs_random(candidates[i], random_stream.child(i));
    } else {
      throw std::invalid_argument("select: policy '" + cfg.policy +
                                  "' does not use this stage");
    }
    if (triple) {
      dataset.push_back(std::move(*triple));
    } else {
      ++skipped;
    }
  }
  if (skipped > 0) {
    std::cerr << "select: skipped " << skipped
              << " prompts with indistinguishable candidates\n";
  }
  save_preference_jsonl(art(cfg, artifact::kPolicyData), dataset);
  timer.add_output(art(cfg, artifact::kPolicyData));
  timer.commit();
}

void stage_dpo(const ExperimentConfig& cfg, RunManifest& manifest) {
  cfg.validate();
  require_artifact(art(cfg, artifact::kPolicyData), "pdgrs or select");
  require_artifact(art(cfg, artifact::kSFTModel), "sft");
  StageTimer timer(manifest, "dpo", cfg.config_hash());
  timer.add_input(art(cfg, artifact::kPolicyData));
  timer.add_input(art(cfg, artifact::kSFTModel));

  PreferenceDataset data =
      load_preference_jsonl(art(cfg, artifact::kPolicyData), cfg.vocab());
  if (cfg.subsample_to > 0 && cfg.subsample_to < data.size()) {
    data = subsample(data, cfg.subsample_to, RngStream(cfg.seed, "subsample"));
  }
  ToyLMParams ref = load_lm_checkpoint(art(cfg, artifact::kSFTModel));
  DPOResult result =
      train_dpo(ref, data, cfg.dpo, RngStream(cfg.seed, "dpo_train"));
  save_lm_checkpoint(art(cfg, artifact::kPolicyModel), result.policy);
  save_dpo_metrics_jsonl(art(cfg, artifact::kDPOMetrics), result.trace);
  save_dpo_metrics_csv(art(cfg, artifact::kDPOCurves), result.trace);

  timer.add_output(art(cfg, artifact::kPolicyModel));
  timer.add_output(art(cfg, artifact::kDPOMetrics));
  timer.add_output(art(cfg, artifact::kDPOCurves));
  timer.commit();
}

void stage_rs_sft(const ExperimentConfig& cfg, RunManifest& manifest) {
  cfg.validate();
  require_artifact(art(cfg, artifact::kRSData), "select");
  require_artifact(art(cfg, artifact::kSFTModel), "sft");
  StageTimer timer(manifest, "rs_sft", cfg.config_hash());
  timer.add_input(art(cfg, artifact::kRSData));
  timer.add_input(art(cfg, artifact::kSFTModel));

  SFTDataset data = load_sft_jsonl(art(cfg, artifact::kRSData), cfg.vocab());
  ToyLMParams start = load_lm_checkpoint(art(cfg, artifact::kSFTModel));
  // one pass over the best-of-k records
  SFTTrainConfig rs_cfg = cfg.sft_train;
  rs_cfg.epochs = 1;
  SFTResult result =
      train_sft(start, data, rs_cfg, RngStream(cfg.seed, "rs_sft_train"));
  save_lm_checkpoint(art(cfg, artifact::kPolicyModel), result.params);

  timer.add_output(art(cfg, artifact::kPolicyModel));
  timer.commit();
}

WinRate stage_eval(const ExperimentConfig& cfg, RunManifest& manifest) {
  cfg.validate();
  require_artifact(art(cfg, artifact::kTask), "synth");
  require_artifact(art(cfg, artifact::kEvalPrompts), "synth");
  require_artifact(art(cfg, artifact::kSFTModel), "sft");
  std::filesystem::path candidate_path =
      cfg.policy == "sft-only" ? art(cfg, artifact::kSFTModel)
                               : art(cfg, artifact::kPolicyModel);
  require_artifact(candidate_path, "dpo or rs-sft");
  StageTimer timer(manifest, "eval", cfg.config_hash());
  timer.add_input(art(cfg, artifact::kTask));
  timer.add_input(art(cfg, artifact::kEvalPrompts));
  timer.add_input(art(cfg, artifact::kSFTModel));
  timer.add_input(candidate_path);

  TaskSpec task = load_task_json(art(cfg, artifact::kTask));
  std::vector<Tokens> prompts =
      load_prompts_jsonl(art(cfg, artifact::kEvalPrompts), cfg.vocab());
  ToyLMParams candidate = load_lm_checkpoint(candidate_path);
  ToyLMParams baseline = load_lm_checkpoint(art(cfg, artifact::kSFTModel));
  // a model evaluated against itself ties on every prompt: share the stream
  // so the 0.5 comes out exact instead of as Monte Carlo noise
  bool same_model = candidate.data == baseline.data;
  WinRate wr = eval_winrate(candidate, baseline, task, prompts,
                            cfg.generation, RngStream(cfg.seed, "eval_cand"),
                            RngStream(cfg.seed,
                                      same_model ? "eval_cand" : "eval_base"),
                            cfg.threads);

  json j{{"win_rate", wr.rate}, {"stderr", wr.stderr_}, {"n", wr.n}};
  {
    std::ofstream out(art(cfg, artifact::kWinRate));
    out << j.dump(2) << '\n';
  }
  timer.add_output(art(cfg, artifact::kWinRate));
  timer.commit();
  return wr;
}

HistogramResult reward_gap_histogram(
    const std::vector<CandidateSet>& candidates, const PDGRSConfig& cfg,
    int bins) {
  if (candidates.empty()) {
    throw std::invalid_argument("reward_gap_histogram: empty artifact");
  }
  if (bins < 1) throw std::invalid_argument("reward_gap_histogram: bins >= 1");
  HistogramResult hist;
  hist.counts.assign(bins, 0);
  hist.eta = cfg.threshold;
  hist.tau = cfg.temperature;
  double sum = 0.0, sumsq = 0.0;
  double width = (hist.bin_hi - hist.bin_lo) / bins;
  for (const auto& set : candidates) {
    size_t k = set.scored.size();
    for (size_t a = 0; a + 1 < k; ++a) {
      for (size_t b = a + 1; b < k; ++b) {
        double hi = std::max(set.scored[a].reward, set.scored[b].reward);
        double lo = std::min(set.scored[a].reward, set.scored[b].reward);
        double g = reward_gap_sigma(hi, lo, cfg.temperature);
        int bin = std::min(bins - 1, static_cast<int>(
                                         (g - hist.bin_lo) / width));
        hist.counts[bin] += 1;
        sum += g;
        sumsq += g * g;
        hist.total_pairs += 1;
      }
    }
  }
  if (hist.total_pairs > 0) {
    double n = static_cast<double>(hist.total_pairs);
    hist.mean = sum / n;
    hist.stddev = std::sqrt(std::max(0.0, sumsq / n - hist.mean * hist.mean));
  }
  return hist;
}

void save_histogram_csv(const std::filesystem::path& path,
                        const HistogramResult& hist) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write histogram: " + path.string());
  }
  out.precision(17);
  out << "# mean=" << hist.mean << "\n# stddev=" << hist.stddev
      << "\n# eta=" << hist.eta << "\n# tau=" << hist.tau
      << "\n# total_pairs=" << hist.total_pairs << '\n';
  out << "bin_lo,bin_hi,count\n";
  double width =
      (hist.bin_hi - hist.bin_lo) / static_cast<double>(hist.counts.size());
  for (size_t i = 0; i < hist.counts.size(); ++i) {
    out << hist.bin_lo + width * static_cast<double>(i) << ','
        << hist.bin_lo + width * static_cast<double>(i + 1) << ','
        << hist.counts[i] << '\n';
  }
}

ExperimentRow run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  RunManifest manifest(cfg.out_dir);
  stage_synth(cfg, manifest);
  stage_sft(cfg, manifest);

  ExperimentRow row;
  row.policy = cfg.policy;
  row.rm_variant = cfg.policy == "original-annotation" || cfg.policy == "sft-only"
                       ? "-"
                       : cfg.rm_variant;
  row.seed = cfg.seed;

  bool needs_rm = cfg.policy != "original-annotation" &&
                  cfg.policy != "sft-only";
  if (needs_rm) {
    stage_rm(cfg, manifest);
    stage_generate(cfg, manifest);
  }

  if (cfg.policy == "proposed") {
    stage_pdgrs(cfg, manifest);
    row.eta = cfg.pdgrs.threshold;
    row.tau = cfg.pdgrs.temperature;
  } else if (cfg.policy != "sft-only") {
    stage_select(cfg, manifest);
  }

  if (cfg.policy == "rejection-sampling") {
    stage_rs_sft(cfg, manifest);
    SFTDataset rs = load_sft_jsonl(art(cfg, artifact::kRSData), cfg.vocab());
    row.sample_size = rs.size();
  } else if (cfg.policy != "sft-only") {
    PreferenceDataset dp =
        load_preference_jsonl(art(cfg, artifact::kPolicyData), cfg.vocab());
    row.sample_size =
        cfg.subsample_to > 0 ? std::min(cfg.subsample_to, dp.size())
                             : dp.size();
    stage_dpo(cfg, manifest);
    // last holdout row of the trace carries the Appendix-B style diagnostics
    std::ifstream metrics(art(cfg, artifact::kDPOMetrics));
    std::string line;
    json last_holdout;
    while (std::getline(metrics, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      if (j.at("split").get<std::string>() == "holdout") last_holdout = j;
    }
    if (!last_holdout.is_null()) {
      row.dpo_reward_accuracy = last_holdout.at("reward_accuracy").get<double>();
      row.dpo_reward_margin = last_holdout.at("reward_margin").get<double>();
    }
  } else {
    SFTDataset sft_data =
        load_sft_jsonl(art(cfg, artifact::kSFTData), cfg.vocab());
    row.sample_size = sft_data.size();
  }

  WinRate wr = stage_eval(cfg, manifest);
  row.win_rate = wr.rate;
  row.win_rate_stderr = wr.stderr_;
  return row;
}

std::vector<std::string> preset_names() {
  return {"default",           "policy-comparison", "threshold-ablation",
          "temperature-ablation", "rm-quality",     "size-controlled"};
}

Preset make_preset(const std::string& name, const ExperimentConfig& base) {
  Preset preset{name, {}};
  auto with = [&](const std::string& policy, uint64_t seed_offset,
                  std::optional<double> eta = std::nullopt,
                  std::optional<double> tau = std::nullopt,
                  const std::string& rm_variant = "rich",
                  size_t subsample_to = 0) {
    ExperimentConfig cfg = base;
    cfg.policy = policy;
    cfg.seed = base.seed + seed_offset;
    if (eta) cfg.pdgrs.threshold = *eta;
    if (tau) cfg.pdgrs.temperature = *tau;
    cfg.rm_variant = rm_variant;
    cfg.subsample_to = subsample_to;
    std::string tag = policy + "_s" + std::to_string(cfg.seed);
    if (eta) tag += "_eta" + std::to_string(*eta).substr(0, 4);
    if (tau) tag += "_tau" + std::to_string(*tau).substr(0, 3);
    if (rm_variant != "rich") tag += "_" + rm_variant;
    if (subsample_to > 0) tag += "_sub";
    cfg.out_dir = base.out_dir / tag;
    preset.runs.push_back(std::move(cfg));
  };

  if (name == "default") {
    with("proposed", 0);
  } else if (name == "policy-comparison") {
    for (uint64_t s = 0; s < 5; ++s) {
      for (const auto& policy : kPolicyNames) with(policy, s);
    }
  } else if (name == "threshold-ablation") {
    for (double eta : {0.80, 0.85, 0.90}) with("proposed", 0, eta);
  } else if (name == "temperature-ablation") {
    for (double tau : {0.8, 0.9, 1.0, 1.1, 1.2}) {
      with("proposed", 0, 0.85, tau);
    }
  } else if (name == "rm-quality") {
    for (uint64_t s = 0; s < 5; ++s) {
      for (const auto& policy : {"proposed", "best-vs-worst"}) {
        with(policy, s, std::nullopt, std::nullopt, "rich");
        with(policy, s, std::nullopt, std::nullopt, "narrow");
      }
    }
  } else if (name == "size-controlled") {
    for (uint64_t s = 0; s < 5; ++s) {
      with("proposed", s, 0.90);
      with("proposed", s, 0.90, std::nullopt, "rich",
           base.preference_prompts);
    }
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  return preset;
}

std::vector<ExperimentRow> run_preset(const Preset& preset) {
  std::vector<ExperimentRow> rows;
  rows.reserve(preset.runs.size());
  for (const auto& cfg : preset.runs) {
    rows.push_back(run_pipeline(cfg));
  }
  return rows;
}

void save_results_csv(const std::filesystem::path& path,
                      const std::vector<ExperimentRow>& rows) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write results: " + path.string());
  out.precision(17);
  out << "policy,rm_variant,seed,sample_size,eta,tau,win_rate,"
         "win_rate_stderr,dpo_reward_accuracy,dpo_reward_margin\n";
  for (const auto& r : rows) {
    out << r.policy << ',' << r.rm_variant << ',' << r.seed << ','
        << r.sample_size << ',';
    if (r.eta) out << *r.eta;
    out << ',';
    if (r.tau) out << *r.tau;
    out << ',' << r.win_rate << ',' << r.win_rate_stderr << ',';
    if (r.dpo_reward_accuracy) out << *r.dpo_reward_accuracy;
    out << ',';
    if (r.dpo_reward_margin) out << *r.dpo_reward_margin;
    out << '\n';
  }
}

}  // namespace rsdpo
