#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace enda {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based generator: every draw is a pure function of
// (seed, c0, c1, c2), so execution order and parallel scheduling
// cannot change results.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  // Uniform in (0, 1).
  double uniform(std::uint64_t c0, std::uint64_t c1 = 0,
                 std::uint64_t c2 = 0) const {
    const std::uint64_t bits = mix(c0, c1, c2, 0);
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller on two independent uniforms.
  double normal(std::uint64_t c0, std::uint64_t c1 = 0,
                std::uint64_t c2 = 0) const {
    const double u1 =
        (static_cast<double>(mix(c0, c1, c2, 1) >> 11) + 0.5) * 0x1.0p-53;
    const double u2 =
        (static_cast<double>(mix(c0, c1, c2, 2) >> 11) + 0.5) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t mix(std::uint64_t c0, std::uint64_t c1, std::uint64_t c2,
                    std::uint64_t salt) const {
    std::uint64_t h = splitmix64(seed_ ^ 0x2545f4914f6cdd1dULL);
    h = splitmix64(h ^ c0);
    h = splitmix64(h ^ c1);
    h = splitmix64(h ^ c2);
    return splitmix64(h ^ salt);
  }

  std::uint64_t seed_;
};

}  // namespace enda
