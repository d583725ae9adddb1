#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace metacub {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Named substream seed. Streams derived from the same parent with different
/// names (or indices) are statistically independent, and adding a new stream
/// never perturbs existing ones.
inline constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view name,
                                           std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(parent ^ fnv1a(name)) + splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// Counter-based draws: the value is a pure function of (key, counters), so
/// two simulations sharing a key see identical draws for the same event
/// regardless of how many other draws happened in between.
inline constexpr std::uint64_t counter_hash(std::uint64_t key, std::uint64_t a, std::uint64_t b = 0,
                                            std::uint64_t c = 0) noexcept {
  return splitmix64(splitmix64(splitmix64(key ^ splitmix64(a)) ^ b) ^ (c * 0xd1342543de82ef95ULL));
}

inline constexpr double to_unit(std::uint64_t bits) noexcept {
  // 53 random mantissa bits, open at 1.
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double counter_uniform(std::uint64_t key, std::uint64_t a, std::uint64_t b = 0,
                              std::uint64_t c = 0) noexcept {
  return to_unit(counter_hash(key, a, b, c));
}

/// Box-Muller standard normal keyed by counters.
inline double counter_normal(std::uint64_t key, std::uint64_t a, std::uint64_t b = 0,
                             std::uint64_t c = 0) noexcept {
  const std::uint64_t h = counter_hash(key, a, b, c);
  const double u1 = (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = to_unit(splitmix64(h));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

/// Sequential generator used where draw order is part of the algorithm
/// (shuffles, Dirichlet samples, EXP3 sampling).
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double uniform() noexcept { return to_unit((*this)()); }

  /// Uniform integer in [0, n). Lemire's multiply-shift without rejection
  /// bias for the small n used here is fine; rejection keeps it exact.
  std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t v;
    do {
      v = (*this)();
    } while (v >= limit);
    return v % n;
  }

  double normal() noexcept {
    const double u1 = (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Exp(1) draw, i.e. Gamma(1,1); used for symmetric Dirichlet sampling.
  double exponential() noexcept {
    return -std::log(1.0 - uniform());
  }

  Rng split(std::string_view name, std::uint64_t index = 0) const noexcept {
    return Rng(derive_seed(state_, name, index));
  }

  template <class It>
  void shuffle(It first, It last) noexcept {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::iter_swap(first + (i - 1), first + j);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace metacub
