#pragma once

#include <cstdint>
#include <random>

#include "wmopt/matrix.hpp"

namespace wmopt {

/// splitmix64 — used both as a seed mixer and to derive per-sample seeds so
/// sweeps are reproducible independently of thread scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 0x51ed2701ULL));
}

/// Deterministic cross-platform RNG: mt19937_64 raw bits mapped to doubles
/// explicitly (std::normal_distribution is implementation-defined, so the
/// gaussian is hand-rolled Box-Muller).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  cplx complex_gaussian() {
    const double re = gaussian();
    const double im = gaussian();
    return cplx(re, im);
  }

  std::uint64_t raw() { return engine_(); }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace wmopt
