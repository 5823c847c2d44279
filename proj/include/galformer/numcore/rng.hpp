#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <utility>
#include <vector>

namespace galformer::nc {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s,
                                       std::uint64_t h = 0xCBF29CE484222325ULL) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Combine a seed with further integer keys into one stream key.
inline constexpr std::uint64_t mix_keys(std::uint64_t seed, std::uint64_t a) noexcept {
  return splitmix64(seed ^ splitmix64(a + 0x632BE59BD9B4E019ULL));
}

inline constexpr double to_unit(std::uint64_t bits) noexcept {
  // 53 random mantissa bits, strictly inside (0, 1)
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Stateless generator: value i of stream `key` is a pure function of (key, i).
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}
  CounterRng(std::uint64_t seed, std::string_view name) noexcept
      : key_(splitmix64(seed ^ fnv1a64(name))) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return splitmix64(key_ ^ splitmix64(counter));
  }
  constexpr double uniform(std::uint64_t counter) const noexcept { return to_unit(bits(counter)); }
  double normal(std::uint64_t counter) const noexcept {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
};

/// Small sequential engine with platform-independent distributions
/// (the std:: distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  double uniform() noexcept { return to_unit(next()); }
  double uniform(double a, double b) noexcept { return a + (b - a) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire-style rejection for exact uniformity
    const std::uint64_t limit = (~std::uint64_t{0} - n + 1) % n;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= limit) return r % n;
    }
  }
  bool bernoulli(double p) noexcept { return uniform() < p; }
  double normal() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  template <class Vec>
  void shuffle(Vec& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace galformer::nc
