#pragma once

// Deterministic, splittable random streams.
//
// Generator "qfm-rng-v1":
//   * engine: std::mt19937_64 (output sequence fixed by the C++ standard)
//   * seeds for sub-tasks: child_seed(master, i, j, ...) chains the SplitMix64
//     finalizer, h0 = mix(master), h_{k+1} = mix(h_k ^ mix(i_k + 0x632be59bd9b4e019))
//   * uniform(0,1): ((u >> 11) + 0.5) * 2^-53, never 0 or 1
//   * normal: Box-Muller, both variates used (cosine first)
//   * exponential: -log(1 - U)
//   * chi2(nu): sum of nu squared normals for integer nu <= 64, otherwise
//     2 * Gamma(nu/2) by Marsaglia-Tsang
//   * student_t(nu): Z / sqrt(chi2(nu) / nu)
// Changing any of the above is a breaking change for every seeded result.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace qfm::rng {

inline constexpr const char* kGeneratorName = "qfm-rng-v1";

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t child_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t idx : path) h = splitmix64(h ^ splitmix64(idx + 0x632be59bd9b4e019ULL));
  return h;
}

template <class... Idx>
constexpr std::uint64_t child_seed(std::uint64_t master, Idx... idx) noexcept {
  return child_seed(master, {static_cast<std::uint64_t>(idx)...});
}

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double exponential() { return -std::log1p(-uniform()); }

  double chi2(double nu) {
    const double rounded = std::round(nu);
    if (rounded == nu && nu >= 1.0 && nu <= 64.0) {
      double s = 0.0;
      for (int k = 0; k < static_cast<int>(nu); ++k) {
        const double z = normal();
        s += z * z;
      }
      return s;
    }
    return 2.0 * gamma(0.5 * nu);
  }

  double student_t(double nu) {
    for (;;) {
      const double z = normal();
      const double v = chi2(nu);
      if (v > 0.0) return z / std::sqrt(v / nu);
    }
  }

  // Marsaglia-Tsang, shape > 0, unit scale.
  double gamma(double shape) {
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace qfm::rng
