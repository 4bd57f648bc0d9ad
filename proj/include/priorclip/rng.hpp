#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace priorclip {

/// Deterministic generator: std::mt19937_64 (its output sequence is fixed by
/// the C++ standard) with distributions implemented here, so streams do not
/// depend on the standard library vendor.
class Rng {
 public:
  static constexpr std::string_view algorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes two draws per call.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Textual engine state (standard mt19937_64 stream format).
  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

/// SplitMix64 mixing of a seed with a stream tag; used to derive independent
/// sub-seeds (per parameter, per epoch).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag);

}  // namespace priorclip
