#pragma once

// Deterministic random streams. Checkpoints and metrics must be byte-identical
// for a given (config, seed), so nothing here depends on libstdc++ distribution
// internals: xoshiro256++ core, explicit 53-bit uniforms, Box-Muller normals.

#include <array>
#include <cstdint>
#include <cmath>
#include <span>
#include <string_view>
#include <vector>

namespace poseworld {

// splitmix64 finalizer; used for seeding and stream derivation.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Child-stream seed from a root seed, a purpose tag, and up to four indices.
// Every stochastic operation in the project draws from a stream derived this
// way, which is what makes replay (and the straight-line training oracle in
// the tests) possible.
inline constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                                           std::uint64_t a = 0, std::uint64_t b = 0,
                                           std::uint64_t c = 0, std::uint64_t d = 0) {
  std::uint64_t h = mix64(root ^ fnv1a64(tag));
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  h = mix64(h ^ d);
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) {
      s += 0x9e3779b97f4a7c15ULL;
      w = mix64(s);
    }
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n). Rejects the low (2^64 mod n) raw values.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t min = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= min) return r % n;
    }
  }

  // Standard normal via Box-Muller. Each call consumes exactly two raw draws;
  // no spare is cached, so stream consumption stays easy to reason about.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  void normal_fill(std::span<double> out) {
    for (auto& v : out) v = normal();
  }

  std::vector<double> normal_vec(std::size_t n) {
    std::vector<double> out(n);
    normal_fill(out);
    return out;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> state_{};
};

inline Rng derive_rng(std::uint64_t root, std::string_view tag, std::uint64_t a = 0,
                      std::uint64_t b = 0, std::uint64_t c = 0, std::uint64_t d = 0) {
  return Rng(derive_seed(root, tag, a, b, c, d));
}

}  // namespace poseworld
