#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "sical/lie.hpp"

namespace sical {

// Counter-based generator: every draw is a pure function of
// (seed, sensor key, sample index, draw counter), so per-sensor streams are
// reproducible independently of generation order.

inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t Fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class StreamRng {
 public:
  StreamRng(std::uint64_t seed, std::string_view sensor, std::uint64_t sample_index)
      : key_(SplitMix64(seed ^ SplitMix64(Fnv1a(sensor) ^ SplitMix64(sample_index)))) {}

  /// Uniform in [0, 1).
  double Uniform() {
    const std::uint64_t bits = SplitMix64(key_ ^ SplitMix64(counter_++));
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  /// Standard normal via Box-Muller (one value per pair of uniforms).
  double Gaussian() {
    const double u1 = 1.0 - Uniform();
    const double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Vec3 GaussianVec3(double sigma) {
    return {sigma * Gaussian(), sigma * Gaussian(), sigma * Gaussian()};
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace sical
