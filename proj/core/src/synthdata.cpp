#include "rsdpo/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rsdpo/parallel.hpp"

namespace rsdpo {

void TaskSpec::validate() const {
  vocab.validate();
  if (static_cast<int>(perm.size()) != vocab.size) {
    throw std::invalid_argument("TaskSpec: perm must have V entries");
  }
  std::vector<bool> seen(vocab.size, false);
  for (int t = 0; t < vocab.size; ++t) {
    int image = perm[t];
    if (t < Vocab::first_content) {
      if (image != t) {
        throw std::invalid_argument("TaskSpec: perm must fix special tokens");
      }
      continue;
    }
    if (image < Vocab::first_content || image >= vocab.size ||
        seen[image]) {
      throw std::invalid_argument(
          "TaskSpec: perm must be a bijection on content tokens");
    }
    seen[image] = true;
  }
  if (min_prompt_len < 2 || max_prompt_len < min_prompt_len) {
    throw std::invalid_argument("TaskSpec: bad prompt length range");
  }
  if (!(length_penalty >= 0.0)) {
    throw std::invalid_argument("TaskSpec: length_penalty >= 0");
  }
  if (!(chain_noise >= 0.0 && chain_noise <= 1.0)) {
    throw std::invalid_argument("TaskSpec: chain_noise in [0, 1]");
  }
}

TaskSpec make_task(const Vocab& vocab, RngStream rng) {
  vocab.validate();
  TaskSpec task;
  task.vocab = vocab;
  task.perm.resize(vocab.size);
  for (int t = 0; t < Vocab::first_content; ++t) task.perm[t] = t;
  std::vector<int> content(vocab.content_count());
  for (int i = 0; i < vocab.content_count(); ++i) {
    content[i] = Vocab::first_content + i;
  }
  for (size_t i = content.size(); i > 1; --i) {
    std::swap(content[i - 1], content[rng.next_index(i)]);
  }
  for (int i = 0; i < vocab.content_count(); ++i) {
    task.perm[Vocab::first_content + i] = content[i];
  }
  return task;
}

void AnnotatorConfig::validate() const {
  if (!(flip_prob >= 0.0 && flip_prob < 0.5)) {
    throw std::invalid_argument("AnnotatorConfig: flip_prob in [0, 0.5)");
  }
  if (!(corruption_rate >= 0.0 && corruption_rate < 1.0)) {
    throw std::invalid_argument("AnnotatorConfig: corruption_rate in [0, 1)");
  }
}

Tokens gen_prompt(const TaskSpec& task, RngStream rng) {
  task.validate();
  int span = task.max_prompt_len - task.min_prompt_len + 1;
  int content_len =
      task.min_prompt_len + static_cast<int>(rng.next_index(span));
  Tokens prompt;
  prompt.reserve(content_len + 2);
  prompt.push_back(Vocab::BOS);
  int tok = task.chain_first();  // constant anchor
  for (int i = 0; i < content_len - 1; ++i) {
    if (i > 0) {
      if (rng.next_double() < task.chain_noise) {
        tok = task.chain_first() +
              static_cast<int>(rng.next_index(task.chain_count()));
      } else {
        tok = task.chain_successor(tok);
      }
    }
    prompt.push_back(tok);
  }
  prompt.push_back(task.marker());
  prompt.push_back(Vocab::SEP);
  return prompt;
}

std::vector<Tokens> gen_prompts(const TaskSpec& task, size_t n,
                                const RngStream& rng) {
  std::vector<Tokens> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) out.push_back(gen_prompt(task, rng.child(i)));
  return out;
}

Tokens ideal_response(const TaskSpec& task, const Tokens& prompt) {
  check_prompt(task.vocab, prompt);
  Tokens resp;
  resp.reserve(prompt.size() - 1);
  for (size_t i = 1; i + 1 < prompt.size(); ++i) {
    resp.push_back(task.perm[prompt[i]]);
  }
  resp.push_back(Vocab::EOS);
  return resp;
}

double oracle_reward(const TaskSpec& task, const Tokens& prompt,
                     const Tokens& response) {
  check_nonempty_response(task.vocab, response);
  Tokens ideal = ideal_response(task, prompt);
  size_t overlap = std::min(response.size(), ideal.size());
  size_t matched = 0;
  for (size_t i = 0; i < overlap; ++i) {
    if (response[i] == ideal[i]) ++matched;
  }
  double ideal_len = static_cast<double>(ideal.size());
  double match = static_cast<double>(matched) / ideal_len;
  double penalty =
      task.length_penalty *
      std::abs(static_cast<double>(response.size()) - ideal_len) / ideal_len;
  return std::clamp(match - penalty, -1.0, 1.0);
}

Tokens corrupt_response(const TaskSpec& task, const Tokens& ideal, double rate,
                        RngStream& rng) {
  Tokens out = ideal;
  int content = task.vocab.content_count();
  for (auto& tok : out) {
    if (Vocab::is_special(tok)) continue;
    if (rng.next_double() < rate) {
      // uniform over the other content tokens, so a corrupted position
      // always differs from the original
      int offset = 1 + static_cast<int>(rng.next_index(content - 1));
      tok = Vocab::first_content +
            (tok - Vocab::first_content + offset) % content;
    }
  }
  return out;
}

SFTDataset gen_sft_dataset(const TaskSpec& task, size_t n,
                           const AnnotatorConfig& annot,
                           const RngStream& rng) {
  task.validate();
  annot.validate();
  if (n == 0) throw std::invalid_argument("gen_sft_dataset: n must be > 0");
  SFTDataset data;
  data.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    RngStream stream = rng.child(i);
    Tokens prompt = gen_prompt(task, stream.child(0));
    RngStream corrupt_stream = stream.child(1);
    Tokens response = corrupt_response(task, ideal_response(task, prompt),
                                       annot.corruption_rate, corrupt_stream);
    data.push_back({std::move(prompt), std::move(response)});
  }
  return data;
}

PreferenceDataset gen_preference_dataset(const TaskSpec& task, size_t n,
                                         const AnnotatorConfig& annot,
                                         const RngStream& rng) {
  task.validate();
  annot.validate();
  if (n == 0) {
    throw std::invalid_argument("gen_preference_dataset: n must be > 0");
  }
  PreferenceDataset data;
  data.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    RngStream stream = rng.child(i);
    Tokens prompt = gen_prompt(task, stream.child(0));
    Tokens ideal = ideal_response(task, prompt);
    RngStream ra_stream = stream.child(1);
    Tokens first =
        corrupt_response(task, ideal, annot.corruption_rate, ra_stream);
    Tokens second;
    // redraw until the pair differs; identical responses cannot form a
    // preference
    bool distinct = false;
    RngStream rb_stream = stream.child(2);
    for (int attempt = 0; attempt < 32; ++attempt) {
      second = corrupt_response(task, ideal, annot.corruption_rate, rb_stream);
      if (second != first) {
        distinct = true;
        break;
      }
    }
    if (!distinct) continue;

    bool first_wins = oracle_reward(task, prompt, first) >=
                      oracle_reward(task, prompt, second);
    if (stream.child(3).next_double() < annot.flip_prob) {
      first_wins = !first_wins;
    }
    PreferenceTriple triple;
    triple.prompt = std::move(prompt);
    if (first_wins) {
      triple.chosen = std::move(first);
      triple.rejected = std::move(second);
    } else {
      triple.chosen = std::move(second);
      triple.rejected = std::move(first);
    }
    data.push_back(std::move(triple));
  }
  if (data.empty()) {
    throw std::runtime_error(
        "gen_preference_dataset: no distinct response pairs produced; "
        "corruption_rate is too low");
  }
  return data;
}

WinRate eval_winrate(const ToyLMParams& candidate, const ToyLMParams& baseline,
                     const TaskSpec& task, const std::vector<Tokens>& prompts,
                     const GenerationConfig& gen, const RngStream& rng_cand,
                     const RngStream& rng_base, int prompt_workers) {
  if (prompts.empty()) {
    throw std::invalid_argument("eval_winrate: no prompts");
  }
  std::vector<double> credit(prompts.size(), 0.0);
  parallel_for(prompts.size(), prompt_workers, [&](size_t i) {
    Tokens cand_resp =
        sample_response(candidate, prompts[i], gen, rng_cand.child(i));
    Tokens base_resp =
        sample_response(baseline, prompts[i], gen, rng_base.child(i));
    double rc = oracle_reward(task, prompts[i], cand_resp);
    double rb = oracle_reward(task, prompts[i], base_resp);
    credit[i] = rc > rb ? 1.0 : (rc == rb ? 0.5 : 0.0);
  });
  WinRate out;
  out.n = prompts.size();
  for (double c : credit) out.rate += c;
  out.rate /= static_cast<double>(out.n);
  out.stderr_ =
      std::sqrt(out.rate * (1.0 - out.rate) / static_cast<double>(out.n));
  return out;
}

}  // namespace rsdpo
