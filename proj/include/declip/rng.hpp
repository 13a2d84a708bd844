/*
Copyright 2026 The Declip Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace declip {

namespace detail {

inline uint64_t rotl64(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) {
  uint64_t s = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  return splitmix64(s);
}

}  // namespace detail

/**
 * Deterministic PRNG (xoshiro256++) used everywhere randomness is needed.
 *
 * The standard library engines are bit-exact but the distributions are not
 * specified, so seeds would not reproduce across standard libraries. All
 * draws here are pinned algorithms and reproduce on any platform.
 */
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : state_) word = detail::splitmix64(sm);
  }

  uint64_t next_u64() {
    uint64_t& s0 = state_[0];
    uint64_t& s1 = state_[1];
    uint64_t& s2 = state_[2];
    uint64_t& s3 = state_[3];
    const uint64_t result = detail::rotl64(s0 + s3, 23) + s0;
    const uint64_t t = s1 << 17;
    s2 ^= s0;
    s3 ^= s1;
    s1 ^= s2;
    s0 ^= s3;
    s2 ^= t;
    s3 = detail::rotl64(s3, 45);
    return result;
  }

  /// Uniform integer in [lo, hi], both ends inclusive. Unbiased (Lemire).
  uint32_t uniform_u32(uint32_t lo, uint32_t hi) {
    const uint64_t n = static_cast<uint64_t>(hi) - lo + 1;
    uint64_t x = next_u64() >> 32;
    uint64_t m = x * n;
    auto l = static_cast<uint32_t>(m);
    if (l < n) {
      const auto t = static_cast<uint32_t>((uint64_t(1) << 32) % n);
      while (l < t) {
        x = next_u64() >> 32;
        m = x * n;
        l = static_cast<uint32_t>(m);
      }
    }
    return lo + static_cast<uint32_t>(m >> 32);
  }

  /// Uniform double in [0, 1).
  double uniform_real() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; consumes exactly two words per call.
  double normal() {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform_real();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = uniform_u32(0, static_cast<uint32_t>(i - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::array<uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<uint64_t, 4>& s) { state_ = s; }

 private:
  std::array<uint64_t, 4> state_{};
};

/**
 * Derives an independent stream from a master seed and up to three stream
 * labels. Streams are pure functions of their arguments, which keeps every
 * consumer (shuffles, crops, inits) reproducible and random-access.
 */
inline Rng make_rng(uint64_t seed, uint64_t a = 0, uint64_t b = 0, uint64_t c = 0) {
  uint64_t h = detail::mix64(seed, a);
  h = detail::mix64(h, b);
  h = detail::mix64(h, c);
  return Rng(h);
}

// Stream labels for derived generators.
namespace rng_stream {
constexpr uint64_t kEpochShuffle = 0xE5;
constexpr uint64_t kTrainingPair = 0xDA;
constexpr uint64_t kGeneratorInit = 0x6E;
constexpr uint64_t kDiscriminatorInit = 0xD1;
constexpr uint64_t kStudyTrial = 0x57;
constexpr uint64_t kSynth = 0x5A;
}  // namespace rng_stream

}  // namespace declip
