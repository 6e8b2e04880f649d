// uxrc/rng.hpp
//
// Seeded randomness for the simulator. Every source of randomness draws from
// its own named stream derived from the master seed, so changing the rate
// control scheme never shifts the channel, scene or BLER realisations.
//
// The transforms below (uniform, normal, exponential) are written out instead
// of using <random> distributions because the standard leaves those
// implementation-defined; runs must be bit-identical across toolchains.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace uxrc {

/// Named environment/controller randomness concerns.
enum class Stream : std::uint64_t {
  channel = 0x6368616e6e656cULL,
  scenes = 0x7363656e6573ULL,
  bler = 0x626c6572ULL,
  ecn = 0x65636eULL,
  controller = 0x6374726cULL,
  bootstrap = 0x626f6f74ULL,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based hash of (seed, stream, a, b). Pure function of its inputs.
constexpr std::uint64_t hash_counter(std::uint64_t seed, Stream stream, std::uint64_t a,
                                     std::uint64_t b = 0) noexcept {
  std::uint64_t h = splitmix64(seed ^ static_cast<std::uint64_t>(stream));
  h = splitmix64(h ^ a);
  return splitmix64(h ^ (b * 0xd6e8feb86659fd93ULL));
}

/// Map 64 random bits to [0, 1) with 53 bits of resolution.
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Seed for the `index`-th substream (e.g. per UE) of a named stream.
constexpr std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                    std::uint64_t index = 0) noexcept {
  return hash_counter(master, stream, index, 0x5eedULL);
}

/// xoshiro256** generator; small, fast and fully specified.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept {
    std::uint64_t s = seed;
    for (auto& w : state_) {
      s = splitmix64(s);
      w = s;
    }
  }

  std::uint64_t next() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  double uniform() noexcept { return to_unit(next()); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per call; the pair's mate is discarded).
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double exponential(double mean) noexcept { return -mean * std::log(1.0 - uniform()); }

  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t state_[4]{};
};

}  // namespace uxrc
