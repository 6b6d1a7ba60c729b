#include "rsdpo/serialize.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "json.hpp"

namespace rsdpo {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'R', 'S', 'D', 'P', 'O', 'C', 'K', 'P'};
constexpr uint8_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

void write_u32(std::ofstream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::ifstream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void save_checkpoint(const std::filesystem::path& path, char kind, uint32_t v,
                     uint32_t c, const std::vector<double>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  out.write(kMagic, sizeof(kMagic));
  out.put(static_cast<char>(kVersion));
  out.put(kind);
  write_u32(out, v);
  write_u32(out, c);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, char expected_kind,
                     uint32_t& v, uint32_t& c, std::vector<double>& data,
                     size_t expected_count(uint32_t, uint32_t)) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("bad checkpoint magic: " + path.string());
  }
  int version = in.get();
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version in " +
                             path.string());
  }
  int kind = in.get();
  if (kind != expected_kind) {
    throw std::runtime_error("checkpoint kind mismatch in " + path.string());
  }
  v = read_u32(in);
  c = read_u32(in);
  if (!in || v < 8 || c < 1) {
    throw std::runtime_error("corrupt checkpoint header in " + path.string());
  }
  size_t count = expected_count(v, c);
  data.resize(count);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in || in.gcount() !=
                 static_cast<std::streamsize>(count * sizeof(double))) {
    throw std::runtime_error("truncated checkpoint: " + path.string());
  }
}

json tokens_to_json(const Tokens& toks) { return json(toks); }

Tokens tokens_from_json(const json& j, const Vocab& vocab, const char* field,
                        size_t row) {
  if (!j.is_array()) {
    throw std::runtime_error("row " + std::to_string(row) + ": field '" +
                             field + "' must be an array of token ids");
  }
  Tokens out;
  out.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_number_integer()) {
      throw std::runtime_error("row " + std::to_string(row) + ": field '" +
                               field + "' must hold integers");
    }
    int tok = e.get<int>();
    if (!vocab.contains(tok)) {
      throw std::runtime_error("row " + std::to_string(row) + ": field '" +
                               field + "' token out of range");
    }
    out.push_back(tok);
  }
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  return out;
}

// Calls fn(row_number, parsed_json) for every non-empty line.
template <typename Fn>
void for_each_jsonl_row(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing artifact: " + path.string());
  std::string line;
  size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("row " + std::to_string(row) + " of " +
                               path.string() + ": " + e.what());
    }
    fn(row, j);
  }
}

}  // namespace

void save_lm_checkpoint(const std::filesystem::path& path,
                        const ToyLMParams& params) {
  params.validate();
  save_checkpoint(path, 'L', static_cast<uint32_t>(params.vocab.size),
                  static_cast<uint32_t>(params.context_len), params.data);
}

ToyLMParams load_lm_checkpoint(const std::filesystem::path& path) {
  uint32_t v = 0, c = 0;
  ToyLMParams params;
  load_checkpoint(path, 'L', v, c, params.data,
                  [](uint32_t vv, uint32_t cc) {
                    return static_cast<size_t>(cc) * vv * vv + vv;
                  });
  params.vocab.size = static_cast<int>(v);
  params.context_len = static_cast<int>(c);
  params.validate();
  return params;
}

void save_rm_checkpoint(const std::filesystem::path& path,
                        const RewardModelParams& params) {
  params.validate();
  save_checkpoint(path, 'R', static_cast<uint32_t>(params.vocab.size),
                  static_cast<uint32_t>(params.context_len), params.data);
}

RewardModelParams load_rm_checkpoint(const std::filesystem::path& path) {
  uint32_t v = 0, c = 0;
  RewardModelParams params;
  load_checkpoint(path, 'R', v, c, params.data,
                  [](uint32_t vv, uint32_t cc) {
                    return static_cast<size_t>(cc) * vv * vv + 1;
                  });
  params.vocab.size = static_cast<int>(v);
  params.context_len = static_cast<int>(c);
  params.validate();
  return params;
}

void save_sft_jsonl(const std::filesystem::path& path,
                    const SFTDataset& data) {
  auto out = open_out(path);
  for (const auto& rec : data) {
    json j{{"prompt", tokens_to_json(rec.prompt)},
           {"response", tokens_to_json(rec.response)}};
    out << j.dump() << '\n';
  }
}

SFTDataset load_sft_jsonl(const std::filesystem::path& path,
                          const Vocab& vocab) {
  SFTDataset data;
  for_each_jsonl_row(path, [&](size_t row, const json& j) {
    if (!j.contains("prompt") || !j.contains("response")) {
      throw std::runtime_error("row " + std::to_string(row) +
                               ": need 'prompt' and 'response'");
    }
    data.push_back({tokens_from_json(j["prompt"], vocab, "prompt", row),
                    tokens_from_json(j["response"], vocab, "response", row)});
  });
  return data;
}

void save_preference_jsonl(const std::filesystem::path& path,
                           const PreferenceDataset& data) {
  auto out = open_out(path);
  for (const auto& t : data) {
    json j{{"prompt", tokens_to_json(t.prompt)},
           {"chosen", tokens_to_json(t.chosen)},
           {"rejected", tokens_to_json(t.rejected)}};
    if (t.gap_sigma) j["gap_sigma"] = *t.gap_sigma;
    out << j.dump() << '\n';
  }
}

PreferenceDataset load_preference_jsonl(const std::filesystem::path& path,
                                        const Vocab& vocab) {
  PreferenceDataset data;
  for_each_jsonl_row(path, [&](size_t row, const json& j) {
    for (const char* field : {"prompt", "chosen", "rejected"}) {
      if (!j.contains(field)) {
        throw std::runtime_error("row " + std::to_string(row) +
                                 ": missing field '" + field + "'");
      }
    }
    PreferenceTriple t;
    t.prompt = tokens_from_json(j["prompt"], vocab, "prompt", row);
    t.chosen = tokens_from_json(j["chosen"], vocab, "chosen", row);
    t.rejected = tokens_from_json(j["rejected"], vocab, "rejected", row);
    if (j.contains("gap_sigma")) {
      if (!j["gap_sigma"].is_number()) {
        throw std::runtime_error("row " + std::to_string(row) +
                                 ": field 'gap_sigma' must be a number");
      }
      t.gap_sigma = j["gap_sigma"].get<double>();
    }
    data.push_back(std::move(t));
  });
  return data;
}

void save_generation_jsonl(const std::filesystem::path& path,
                           const std::vector<CandidateSet>& candidates) {
  auto out = open_out(path);
  for (size_t i = 0; i < candidates.size(); ++i) {
    json responses = json::array();
    for (const auto& sr : candidates[i].scored) {
      responses.push_back(
          {{"tokens", tokens_to_json(sr.response)}, {"reward", sr.reward}});
    }
    json j{{"prompt_id", i},
           {"prompt", tokens_to_json(candidates[i].prompt)},
           {"responses", responses}};
    out << j.dump() << '\n';
  }
}

std::vector<CandidateSet> load_generation_jsonl(
    const std::filesystem::path& path, const Vocab& vocab) {
  std::vector<CandidateSet> out;
  for_each_jsonl_row(path, [&](size_t row, const json& j) {
    if (!j.contains("prompt") || !j.contains("responses") ||
        !j["responses"].is_array()) {
      throw std::runtime_error("row " + std::to_string(row) +
                               ": need 'prompt' and 'responses' array");
    }
    CandidateSet set;
    set.prompt = tokens_from_json(j["prompt"], vocab, "prompt", row);
    for (const auto& r : j["responses"]) {
      if (!r.contains("tokens") || !r.contains("reward") ||
          !r["reward"].is_number()) {
        throw std::runtime_error("row " + std::to_string(row) +
                                 ": responses need 'tokens' and 'reward'");
      }
      set.scored.push_back({tokens_from_json(r["tokens"], vocab, "tokens", row),
                            r["reward"].get<double>()});
    }
    out.push_back(std::move(set));
  });
  return out;
}

void save_task_json(const std::filesystem::path& path, const TaskSpec& task) {
  task.validate();
  json j{{"vocab_size", task.vocab.size},
         {"perm", task.perm},
         {"min_prompt_len", task.min_prompt_len},
         {"max_prompt_len", task.max_prompt_len},
         {"length_penalty", task.length_penalty},
         {"chain_noise", task.chain_noise}};
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

TaskSpec load_task_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing task spec: " + path.string());
  json j = json::parse(in);
  TaskSpec task;
  task.vocab.size = j.at("vocab_size").get<int>();
  task.perm = j.at("perm").get<std::vector<int>>();
  task.min_prompt_len = j.at("min_prompt_len").get<int>();
  task.max_prompt_len = j.at("max_prompt_len").get<int>();
  task.length_penalty = j.at("length_penalty").get<double>();
  task.chain_noise = j.at("chain_noise").get<double>();
  task.validate();
  return task;
}

void save_step_metrics_jsonl(const std::filesystem::path& path,
                             const std::vector<StepMetric>& trace) {
  auto out = open_out(path);
  for (const auto& m : trace) {
    json j{{"step", m.step}, {"lr", m.lr}, {"loss", m.loss}};
    out << j.dump() << '\n';
  }
}

void save_dpo_metrics_jsonl(const std::filesystem::path& path,
                            const std::vector<DPOEpochMetric>& trace) {
  auto out = open_out(path);
  for (const auto& m : trace) {
    json j{{"epoch", m.epoch},
           {"split", m.split},
           {"loss", m.metrics.loss},
           {"reward_accuracy", m.metrics.reward_accuracy},
           {"reward_margin", m.metrics.reward_margin}};
    out << j.dump() << '\n';
  }
}

void save_dpo_metrics_csv(const std::filesystem::path& path,
                          const std::vector<DPOEpochMetric>& trace) {
  auto out = open_out(path);
  out << "epoch,split,loss,reward_accuracy,reward_margin\n";
  out.precision(17);
  for (const auto& m : trace) {
    out << m.epoch << ',' << m.split << ',' << m.metrics.loss << ','
        << m.metrics.reward_accuracy << ',' << m.metrics.reward_margin
        << '\n';
  }
}

uint64_t fnv1a64(const void* data, size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  uint64_t h = 0xCBF29CE484222325ULL;
  for (size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot checksum: " + path.string());
  std::string contents((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(contents.data(), contents.size())));
  return std::string(buf);
}

void save_prompts_jsonl(const std::filesystem::path& path,
                        const std::vector<Tokens>& prompts) {
  auto out = open_out(path);
  for (const auto& p : prompts) {
    json j{{"prompt", tokens_to_json(p)}};
    out << j.dump() << '\n';
  }
}

std::vector<Tokens> load_prompts_jsonl(const std::filesystem::path& path,
                                       const Vocab& vocab) {
  std::vector<Tokens> prompts;
  for_each_jsonl_row(path, [&](size_t row, const json& j) {
    if (!j.contains("prompt")) {
      throw std::runtime_error("row " + std::to_string(row) +
                               ": missing field 'prompt'");
    }
    prompts.push_back(tokens_from_json(j["prompt"], vocab, "prompt", row));
  });
  return prompts;
}

}  // namespace rsdpo
