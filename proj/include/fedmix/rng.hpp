#pragma once

// Deterministic random number generation. The standard library distributions
// are implementation-defined, so every draw the library makes goes through
// this generator to keep runs reproducible across compilers.

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "fedmix/common.hpp"

namespace fedmix {

/// splitmix64 step; also used as a seed-mixing finalizer.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent sub-seed from a master seed and a path of stream
/// tags (client id, round, trial, ...). Every experiment sub-component gets
/// its own derived seed so sub-runs are independently reproducible.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = master;
  splitmix64(h);
  for (std::uint64_t x : path) {
    h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    splitmix64(h);
  }
  return h;
}

// Stream tags for the seed derivation scheme.
namespace stream {
constexpr std::uint64_t kEmFit = 1;
constexpr std::uint64_t kDictInit = 2;
constexpr std::uint64_t kPeerSelect = 3;
constexpr std::uint64_t kSynthetic = 4;
constexpr std::uint64_t kTrial = 5;
constexpr std::uint64_t kSample = 6;
constexpr std::uint64_t kAblation = 7;
constexpr std::uint64_t kEnvelope = 8;
}  // namespace stream

/// Deterministic PRNG (splitmix64 stream) with the handful of draw types the
/// library needs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Warm up so that small seeds do not produce correlated first draws.
    splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). Rejection sampling, unbiased.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller; the spare draw is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  Vec normal_vec(std::size_t n) {
    Vec v(n);
    for (auto& x : v) x = normal();
    return v;
  }

  /// k distinct integers drawn uniformly from [0, n) \ {exclude}.
  std::vector<int> distinct_ints_excluding(int n, int k, int exclude) {
    std::vector<int> pool;
    pool.reserve(static_cast<std::size_t>(n) - 1);
    for (int i = 0; i < n; ++i)
      if (i != exclude) pool.push_back(i);
    // Partial Fisher-Yates.
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      const auto j = i + static_cast<int>(uniform_int(pool.size() - static_cast<std::size_t>(i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
      out.push_back(pool[static_cast<std::size_t>(i)]);
    }
    return out;
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fedmix
