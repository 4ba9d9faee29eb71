#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace gvqa {

// Deterministic pseudo-random source used everywhere randomness is needed
// (scene sampling, signature vectors, parameter init, shuffles). Self-contained
// xoshiro256** seeded via splitmix64 so that corpora, initial weights, and
// training runs reproduce bit-for-bit regardless of the standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  uint64_t next() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) {
    // Rejection sampling to avoid modulo bias.
    const uint64_t bound = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t v = next();
    while (v >= limit) v = next();
    return static_cast<int>(v % bound);
  }

  bool coin(double p_true = 0.5) { return uniform() < p_true; }

  // Standard normal via Box-Muller (no cached spare, to keep the consumption
  // pattern trivially predictable).
  double normal() {
    const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      const int j = uniform_int(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

  // Independent child stream for a tagged sub-task (per-scene noise, etc.).
  Rng fork(uint64_t tag) {
    uint64_t x = state_[0] ^ (0x9e3779b97f4a7c15ULL + tag);
    return Rng(splitmix64(x));
  }

  static uint64_t mix(uint64_t seed, uint64_t salt) {
    uint64_t x = seed ^ (salt * 0xbf58476d1ce4e5b9ULL + 0x94d049bb133111ebULL);
    return splitmix64(x);
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t state_[4];
};

}  // namespace gvqa
