#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace stbn {

/// Stateless counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so results do not depend on call order or platform.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t hash_name(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char ch : s) {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  CounterRng substream(std::uint64_t key) const { return CounterRng(seed_, mix(stream_ ^ mix(key))); }

  std::uint64_t bits(std::uint64_t counter) const { return mix(mix(seed_ ^ mix(stream_)) ^ counter); }

  /// Uniform in (0, 1); never returns 0 so logs are safe.
  double uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  /// Standard normal via Box-Muller on two decorrelated counters.
  double normal(std::uint64_t counter) const {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
    return n == 0 ? 0 : static_cast<std::uint64_t>(uniform(counter) * static_cast<double>(n)) % n;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

}  // namespace stbn
