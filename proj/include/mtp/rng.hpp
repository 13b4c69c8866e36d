#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "mtp/error.hpp"

namespace mtp {

// splitmix64: used to expand seeds and to derive per-stage streams.
struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Stream-splitting rule: the child stream for a labelled stage is
// splitmix64(master ^ fnv1a64(label)).next(). Every pipeline stage (graph,
// split, path sampling, init, batching, decoding, ...) derives its own seed
// this way, so stages can be re-run or reordered without perturbing others.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  SplitMix64 mix(master ^ fnv1a64(label));
  return mix.next();
}

// xoshiro256** (Blackman/Vigna). Self-contained so that every stream is
// reproducible bit-for-bit across platforms and standard libraries; the
// distributions below avoid std::* distributions for the same reason.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    SplitMix64 mix(seed);
    for (auto& w : s_) w = mix.next();
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer in [0, n) (Lemire multiply-shift with rejection).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ContractError("Rng::below: n must be positive");
    unsigned __int128 m = (unsigned __int128)next_u64() * n;
    auto lo = (std::uint64_t)m;
    if (lo < n) {
      const std::uint64_t cutoff = (0 - n) % n;
      while (lo < cutoff) {
        m = (unsigned __int128)next_u64() * n;
        lo = (std::uint64_t)m;
      }
    }
    return (std::uint64_t)(m >> 64);
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    if (lo > hi) throw ContractError("Rng::uniform_int: empty range");
    return lo + int(below(std::uint64_t(hi) - std::uint64_t(lo) + 1));
  }

  // Standard normal via Box-Muller; pairs are cached so draw order is fixed.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0,1], keeps log finite
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {  // Fisher-Yates
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mtp
