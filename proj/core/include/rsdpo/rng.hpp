#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>

namespace rsdpo {

namespace detail {

// splitmix64 finalizer; full-period 64-bit mixer.
inline uint64_t mix64(uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

inline uint64_t combine(uint64_t key, uint64_t value) {
  return mix64(key + 0x9E3779B97F4A7C15ULL + mix64(value));
}

}  // namespace detail

// Counter-based deterministic pseudo-random stream. The stream is fully
// identified by (global_seed, stream_label, index): the n-th draw is a pure
// function of the identifier and n, so identical identifiers reproduce
// identical draws no matter how work is scheduled across threads.
class RngStream {
 public:
  RngStream(uint64_t global_seed, std::string_view label, uint64_t index = 0)
      : key_(derive_key(global_seed, label, index)) {}

  // Derived stream with draws independent of this stream's.
  RngStream child(uint64_t index) const {
    return RngStream(detail::combine(key_, 0x43484C44ULL ^ index));
  }
  RngStream child(std::string_view label, uint64_t index = 0) const {
    return RngStream(derive_key(key_, label, index));
  }

  uint64_t next_u64() {
    return detail::mix64(key_ + counter_++ * 0x9E3779B97F4A7C15ULL);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n); n must be positive.
  size_t next_index(size_t n) {
    return static_cast<size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Inverse-CDF draw from a probability vector (entries >= 0, sum ~ 1).
  // Falls back to the last positive entry if rounding leaves u past the
  // cumulative total.
  size_t sample_categorical(std::span<const double> probs) {
    double u = next_double();
    double cum = 0.0;
    size_t last_positive = probs.size();
    for (size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      cum += probs[i];
      last_positive = i;
      if (u < cum) return i;
    }
    if (last_positive == probs.size()) {
      throw std::invalid_argument("sample_categorical: no positive mass");
    }
    return last_positive;
  }

 private:
  explicit RngStream(uint64_t key) : key_(key) {}

  static uint64_t derive_key(uint64_t seed, std::string_view label,
                             uint64_t index) {
    uint64_t key = detail::mix64(seed);
    for (char ch : label) {
      key = detail::combine(key, static_cast<uint64_t>(ch));
    }
    return detail::combine(key, index);
  }

  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace rsdpo
