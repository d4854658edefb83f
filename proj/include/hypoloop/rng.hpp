#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace hypoloop {

// SplitMix64 (Steele, Lea, Flood). This exact construction is part of the
// reproducibility contract: splits, fold assignment, prompt-mode draws and the
// synthetic world are all derived from it, so alternate implementations can
// reproduce runs bit-exactly.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) from the top 53 bits of one draw.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound). Plain modulo; bias is below 2^-40 for the
  // sizes used here and keeps the contract trivial to reimplement.
  std::uint64_t below(std::uint64_t bound) { return next() % bound; }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller, consuming exactly two draws.
  double normal(double mean, double sd) {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sd * r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

// Per-purpose tags XORed into the run seed.
namespace rng_tag {
inline constexpr std::uint64_t kSplit = 0x53504C4954000001ULL;   // "SPLIT"
inline constexpr std::uint64_t kKFold = 0x4B464F4C44000002ULL;   // "KFOLD"
inline constexpr std::uint64_t kPromptMode = 0x4D4F444500000003ULL;  // "MODE"
inline constexpr std::uint64_t kWorld = 0x574F524C44000004ULL;   // "WORLD"
inline constexpr std::uint64_t kMockLlm = 0x4D4C4C4D00000005ULL;   // "MLLM"
inline constexpr std::uint64_t kMockVqa = 0x5651410000000006ULL;   // "VQA"
}  // namespace rng_tag

// Mixes an extra word into a seed (one SplitMix64 step over seed ^ word).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t word) {
  SplitMix64 sm(seed ^ (word * 0xD1B54A32D192ED03ULL));
  return sm.next();
}

// Fisher-Yates from the back: for i = n-1 .. 1, swap(i, below(i + 1)).
template <typename T>
void fisher_yates(std::span<T> items, SplitMix64& rng) {
  if (items.size() < 2) return;
  for (std::size_t i = items.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(items[i], items[j]);
  }
}

}  // namespace hypoloop
