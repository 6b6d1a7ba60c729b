#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rsdpo {

using Tokens = std::vector<int>;

// Fixed vocabulary over small integer token ids. Ids 0..3 are reserved
// special tokens; everything from first_content up is a content token.
struct Vocab {
  int size = 32;

  static constexpr int PAD = 0;
  static constexpr int BOS = 1;
  static constexpr int EOS = 2;
  static constexpr int SEP = 3;
  static constexpr int first_content = 4;

  int content_count() const { return size - first_content; }

  bool contains(int tok) const { return tok >= 0 && tok < size; }
  static bool is_special(int tok) { return tok < first_content; }

  void validate() const {
    if (size < 8) {
      throw std::invalid_argument("Vocab: size must be >= 8, got " +
                                  std::to_string(size));
    }
  }
};

inline void check_tokens_in_range(const Vocab& vocab, const Tokens& toks,
                                  const char* what) {
  for (int t : toks) {
    if (!vocab.contains(t)) {
      throw std::invalid_argument(std::string(what) + ": token id " +
                                  std::to_string(t) + " outside [0, " +
                                  std::to_string(vocab.size) + ")");
    }
  }
}

// A prompt is BOS <content...> SEP.
inline void check_prompt(const Vocab& vocab, const Tokens& prompt) {
  check_tokens_in_range(vocab, prompt, "prompt");
  if (prompt.size() < 2 || prompt.front() != Vocab::BOS ||
      prompt.back() != Vocab::SEP) {
    throw std::invalid_argument("prompt must begin with BOS and end with SEP");
  }
  for (size_t i = 1; i + 1 < prompt.size(); ++i) {
    if (Vocab::is_special(prompt[i])) {
      throw std::invalid_argument("prompt interior must be content tokens");
    }
  }
}

// A response never contains BOS/SEP/PAD; EOS may appear only as the final
// token (a response without EOS is incomplete but still valid input).
inline void check_response(const Vocab& vocab, const Tokens& response) {
  check_tokens_in_range(vocab, response, "response");
  for (size_t i = 0; i < response.size(); ++i) {
    int t = response[i];
    if (t == Vocab::BOS || t == Vocab::SEP || t == Vocab::PAD) {
      throw std::invalid_argument("response may not contain BOS/SEP/PAD");
    }
    if (t == Vocab::EOS && i + 1 != response.size()) {
      throw std::invalid_argument("EOS may only terminate a response");
    }
  }
}

inline void check_nonempty_response(const Vocab& vocab,
                                    const Tokens& response) {
  if (response.empty()) {
    throw std::invalid_argument("response must be non-empty");
  }
  check_response(vocab, response);
}

// ctx[i] = token (i+1) positions back in prompt ++ response[0..t),
// left-padded with PAD beyond the sequence start.
inline void ngram_context(const Tokens& prompt, const Tokens& response,
                          size_t t, int context_len, int* ctx) {
  size_t len = prompt.size() + t;
  for (int i = 0; i < context_len; ++i) {
    size_t back = static_cast<size_t>(i) + 1;
    if (back > len) {
      ctx[i] = Vocab::PAD;
    } else if (back <= t) {
      ctx[i] = response[t - back];
    } else {
      ctx[i] = prompt[prompt.size() - (back - t)];
    }
  }
}

}  // namespace rsdpo
