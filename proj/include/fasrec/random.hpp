#pragma once

// Seeded random streams with platform-independent output.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. The standard distributions are not, so every transform from raw
// 64-bit words to uniforms and Gaussians lives here:
//
//   uniform01      : (word >> 11) * 2^-53, in [0, 1)
//   complex_normal : Box-Muller on one pair (u1, u2),
//                    rad = sqrt(-2 ln(1 - u1)), phase = 2 pi u2,
//                    re = sqrt(var/2) rad cos(phase), im = sqrt(var/2) rad sin(phase)
//   below(n)       : rejection sampling on the top multiple of n
//
// Independent substreams are derived from (master seed, stream, index) with a
// splitmix64 chain, so work split across threads draws identical numbers.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <utility>

namespace fasrec {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based seed for substream `index` of logical stream `stream`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
  return splitmix64(master ^ splitmix64(stream ^ splitmix64(index)));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t w;
    do {
      w = engine_();
    } while (w >= limit);
    return w % n;
  }

  // Circularly symmetric complex Gaussian with E|z|^2 = variance.
  std::complex<double> complex_normal(double variance = 1.0) {
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double rad = std::sqrt(-2.0 * std::log1p(-u1));
    const double phase = 2.0 * std::numbers::pi * u2;
    const double scale = std::sqrt(variance / 2.0);
    return {scale * rad * std::cos(phase), scale * rad * std::sin(phase)};
  }

  double normal() { return std::sqrt(2.0) * complex_normal(1.0).real(); }

  // Fisher-Yates, back to front.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fasrec
