#pragma once

#include <cstdint>
#include <initializer_list>

namespace fpc {

// Stream tags mixed into every derived seed so that phases never share
// random numbers even when their (question, index) coordinates coincide.
enum class Phase : std::uint64_t {
  kWorld = 0x11,
  kQuestions = 0x12,
  kPretrain = 0x13,
  kScan = 0x21,
  kSweep = 0x22,
  kHarvest = 0x23,
  kTrain = 0x31,
  kEval = 0x41,
  kRecoveryReference = 0x42,
  kRecoveryExemplar = 0x43,
  kRecoveryContinuation = 0x44,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Order-sensitive hash of a coordinate tuple. Every random stream in the
// library is keyed this way, so results do not depend on scheduling.
constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t run_seed, Phase phase,
                                    std::uint64_t a = 0, std::uint64_t b = 0) {
  return derive_seed({run_seed, static_cast<std::uint64_t>(phase), a, b});
}

// Counter-based generator: the i-th output is splitmix64(seed + i * gamma).
class Rng {
 public:
  explicit constexpr Rng(std::uint64_t seed) : state_(seed) {}

  constexpr std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  constexpr double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n), unbiased (rejection on the tail).
  constexpr std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

 private:
  std::uint64_t state_;
};

}  // namespace fpc
