#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace denfield {

// Deterministic random stream. All randomness in the project flows from a
// single 64-bit seed through SeededRng; child streams are derived from
// (seed, stage tag, index) so parallel consumers never share state.
//
// Gaussian draws use Box-Muller with pair caching; Poisson draws use Knuth
// inversion for lambda < 10 and Hormann's PTRS transformed rejection for
// lambda >= 10. Both are fixed by this implementation, not delegated to
// [std::poisson_distribution], so streams are reproducible across standard
// libraries.
class SeededRng {
public:
  static constexpr const char* algorithm = "mt19937_64+boxmuller+inv/ptrs";

  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  SeededRng derive(std::string_view stage, std::uint64_t index) const {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the stage tag
    for (char c : stage) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return SeededRng(splitmix(splitmix(seed_ ^ h) + index));
  }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1); rejects the zero draw so logs stay finite.
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_open()));
    const double phi = 2.0 * kPi * uniform();
    cached_ = r * std::sin(phi);
    have_cached_ = true;
    return r * std::cos(phi);
  }

  std::int64_t poisson(double lambda) {
    if (lambda < 0.0 || !std::isfinite(lambda))
      throw std::domain_error("poisson: intensity must be finite and >= 0");
    if (lambda == 0.0) return 0;
    return lambda < 10.0 ? poisson_inversion(lambda) : poisson_ptrs(lambda);
  }

private:
  static constexpr double kPi = 3.141592653589793238462643383279502884;

  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::int64_t poisson_inversion(double lambda) {
    const double limit = std::exp(-lambda);
    std::int64_t k = 0;
    double prod = uniform_open();
    while (prod > limit) {
      prod *= uniform_open();
      ++k;
    }
    return k;
  }

  // Hormann (1993), transformed rejection with squeeze (PTRS).
  std::int64_t poisson_ptrs(double lambda) {
    const double slam = std::sqrt(lambda);
    const double loglam = std::log(lambda);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);

    for (;;) {
      const double u = uniform() - 0.5;
      const double v = uniform_open();
      const double us = 0.5 - std::abs(u);
      const double kf = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
      if (us >= 0.07 && v <= v_r) return static_cast<std::int64_t>(kf);
      if (kf < 0.0 || (us < 0.013 && v > us)) continue;
      const double lhs = std::log(v * inv_alpha / (a / (us * us) + b));
      const double rhs = -lambda + kf * loglam - std::lgamma(kf + 1.0);
      if (lhs <= rhs) return static_cast<std::int64_t>(kf);
    }
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace denfield
