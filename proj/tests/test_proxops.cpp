#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "denfield/proxops.hpp"
#include "denfield/rng.hpp"

using namespace denfield;

namespace {

// Independent oracle for W: bisection on w e^w = x over the principal branch.
double lambert_w_bisect(double x) {
  double lo = -1.0;
  double hi = std::max(1.0, std::log(std::max(x, 1.0)) + 1.0);
  while (hi * std::exp(hi) < x) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid * std::exp(mid) < x ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Independent oracle: golden-section minimization over a bracket. The
// objective is evaluated in extended precision; in plain doubles the
// comparison noise floor sqrt(eps |f| / f'') sits right at the 1e-8
// tolerances these tests pin down.
double golden_section(const std::function<long double(long double)>& f, double lo, double hi,
                      int iters = 200) {
  const long double phi = (std::sqrt(5.0L) - 1.0L) / 2.0L;
  long double a = lo, b = hi;
  long double c = b - phi * (b - a);
  long double d = a + phi * (b - a);
  long double fc = f(c), fd = f(d);
  for (int i = 0; i < iters; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    }
  }
  return static_cast<double>(0.5L * (a + b));
}

StationaryCovariance scalar_cov(double sigma2) {
  return StationaryCovariance(RadialBinning(1, 1, {0.0, 1.0}), {sigma2});
}

}  // namespace

TEST_CASE("soft_threshold") {
  REQUIRE(soft_threshold(0.0, 0.7) == 0.0);
  REQUIRE(soft_threshold(2.0, 0.5) == 1.5);
  REQUIRE(soft_threshold(-0.3, 0.5) == 0.0);
  REQUIRE(soft_threshold(-2.0, 0.5) == -1.5);
  REQUIRE_THROWS_AS(soft_threshold(1.0, -0.1), std::domain_error);

  SECTION("vector form and nonexpansiveness") {
    SeededRng rng(21);
    std::vector<double> a(64), b(64);
    for (std::size_t i = 0; i < 64; ++i) {
      a[i] = 3.0 * rng.gaussian();
      b[i] = 3.0 * rng.gaussian();
    }
    const auto sa = soft_threshold(std::span<const double>(a), 0.8);
    const auto sb = soft_threshold(std::span<const double>(b), 0.8);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 64; ++i) {
      num += (sa[i] - sb[i]) * (sa[i] - sb[i]);
      den += (a[i] - b[i]) * (a[i] - b[i]);
    }
    REQUIRE(std::sqrt(num) <= std::sqrt(den) + 1e-10);
  }
}

TEST_CASE("lambert_w") {
  SECTION("exact anchors") {
    REQUIRE(lambert_w(0.0) == 0.0);
    REQUIRE_THAT(lambert_w(std::exp(1.0)), Catch::Matchers::WithinAbs(1.0, 1e-14));
  }
  SECTION("W(1) against the bisection oracle") {
    const double oracle = lambert_w_bisect(1.0);
    REQUIRE_THAT(oracle, Catch::Matchers::WithinAbs(0.567143290, 1e-9));
    REQUIRE_THAT(lambert_w(1.0), Catch::Matchers::WithinAbs(oracle, 1e-12));
  }
  SECTION("residual over a log grid from the branch point to 1e6") {
    const double lo = -1.0 / std::exp(1.0);
    for (int i = 0; i <= 2000; ++i) {
      // geometric sweep of x + 1/e over [1e-9, 1e6]
      const double t = static_cast<double>(i) / 2000.0;
      const double x = lo + std::pow(10.0, -9.0 + 15.0 * t);
      const double w = lambert_w(x);
      REQUIRE(std::abs(w * std::exp(w) - x) / std::max(std::abs(x), 1.0) <= 1e-12);
    }
  }
  SECTION("domain error below -1/e") {
    REQUIRE_THROWS_AS(lambert_w(-0.4), std::domain_error);
  }
  SECTION("overflow-safe log form agrees across its branches") {
    for (double u : {-60.0, -20.0, 0.0, 5.0, 300.0, 699.0, 701.0, 2000.0, 1e6}) {
      const double w = lambert_w_exp(u);
      if (w > 0.0)
        REQUIRE(std::abs(w + std::log(w) - u) <= 1e-11 * std::max(1.0, std::abs(u)));
    }
  }
}

TEST_CASE("prox_scaled_exp") {
  SECTION("analytically forced values") {
    REQUIRE_THAT(prox_scaled_exp(1.0, 1.0), Catch::Matchers::WithinAbs(0.0, 1e-14));
    const double oracle = -lambert_w_bisect(1.0);
    REQUIRE_THAT(prox_scaled_exp(0.0, 1.0), Catch::Matchers::WithinAbs(oracle, 1e-12));
  }
  SECTION("tiny scale approaches the identity") {
    const double a = 1e-14;
    REQUIRE_THAT(prox_scaled_exp(3.0, a),
                 Catch::Matchers::WithinAbs(3.0, 2.0 * a * std::exp(3.0)));
  }
  SECTION("zero scale is rejected") {
    REQUIRE_THROWS_AS(prox_scaled_exp(1.0, 0.0), std::domain_error);
  }
  SECTION("first-order optimality on random inputs") {
    SeededRng rng(33);
    for (int i = 0; i < 1000; ++i) {
      const double x = 20.0 * rng.gaussian();
      const double a = std::exp(2.0 * rng.gaussian());
      const double p = prox_scaled_exp(x, a);
      REQUIRE(std::abs(a * std::exp(p) + p - x) <= 1e-10 * (1.0 + std::abs(x)));
    }
  }
  SECTION("stable for very large arguments") {
    const double p = prox_scaled_exp(1e6, 2.0);
    REQUIRE(std::isfinite(p));
    // check the log form w + log w = x + log a with w = x - p
    const double w = 1e6 - p;
    REQUIRE(std::abs(w + std::log(w) - (1e6 + std::log(2.0))) <= 1e-6);
  }
  SECTION("finite-difference optimality of the implied objective") {
    SeededRng rng(44);
    for (int i = 0; i < 200; ++i) {
      const double x = 5.0 * rng.gaussian();
      const double a = std::exp(rng.gaussian());
      const double p = prox_scaled_exp(x, a);
      const auto obj = [&](double q) { return a * std::exp(q) + 0.5 * (q - x) * (q - x); };
      const double h = 1e-6;
      const double deriv = (obj(p + h) - obj(p - h)) / (2.0 * h);
      REQUIRE(std::abs(deriv) <= 1e-6 * (1.0 + std::abs(x)));
    }
  }
  SECTION("monotone and firmly nonexpansive in x") {
    SeededRng rng(55);
    for (int i = 0; i < 500; ++i) {
      const double a = std::exp(rng.gaussian());
      double x1 = 5.0 * rng.gaussian();
      double x2 = 5.0 * rng.gaussian();
      if (x1 > x2) std::swap(x1, x2);
      const double p1 = prox_scaled_exp(x1, a);
      const double p2 = prox_scaled_exp(x2, a);
      if (x1 < x2) REQUIRE(p1 < p2);
      REQUIRE(std::abs(p2 - p1) <= std::abs(x2 - x1) + 1e-10);
    }
  }
}

TEST_CASE("prox_data") {
  SECTION("gamma = 0 reduces to the pixelwise closed form") {
    SeededRng rng(66);
    const std::size_t n = 8;
    RealGrid x(n, n);
    CountGrid y(n, n);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = rng.gaussian();
      y[i] = rng.poisson(6.0);
    }
    const double beta = 0.7, m_bar = 4.0;
    const ProxParams params{beta, 0.0, 0.0, m_bar};
    const LogNormalParams prior(
        0.0, StationaryCovariance(RadialBinning::linear(n, n, 3), std::vector<double>(3, 1.0)));
    for (ProxMode mode : {ProxMode::paper, ProxMode::exact}) {
      const GaussianField out = prox_data(GaussianField(x), params, prior, y, mode);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i] + beta * static_cast<double>(y[i]);
        const double expected = v - lambert_w(beta * m_bar * std::exp(v));
        REQUIRE_THAT(out.z[i], Catch::Matchers::WithinAbs(expected, 1e-11));
      }
    }
  }
  SECTION("exact mode matches the golden-section oracle on the pinned instance") {
    // beta=1, mbar=1, gamma=1, sigma^2=1, mu=0, y=0, x=0:
    // minimize e^p + p + p^2 + p^2/2
    const ProxParams params{1.0, 1.0, 0.0, 1.0};
    const LogNormalParams prior(0.0, scalar_cov(1.0));
    CountGrid y(1, 1, 0);
    const GaussianField out =
        prox_data(GaussianField(RealGrid(1, 1, 0.0)), params, prior, y, ProxMode::exact);
    const auto obj = [](long double p) { return std::exp(p) + p + p * p + 0.5L * p * p; };
    const double oracle = golden_section(obj, -5.0, 5.0);
    REQUIRE_THAT(out.z[0], Catch::Matchers::WithinAbs(oracle, 1e-8));
  }
  SECTION("exact mode matches the oracle on random scalar instances") {
    SeededRng rng(77);
    for (int i = 0; i < 300; ++i) {
      const double beta = std::exp(rng.gaussian());
      const double gamma = std::exp(rng.gaussian() - 1.0);
      const double m_bar = std::exp(rng.gaussian() + 0.5);
      const double sigma2 = std::exp(rng.gaussian());
      const double mu = rng.gaussian();
      const double x = 2.0 * rng.gaussian();
      const auto yv = rng.poisson(5.0);
      const ProxParams params{beta, gamma, 0.0, m_bar};
      const LogNormalParams prior(mu, scalar_cov(sigma2));
      CountGrid y(1, 1, yv);
      const GaussianField out =
          prox_data(GaussianField(RealGrid(1, 1, x)), params, prior, y, ProxMode::exact);
      const auto obj = [&](long double p) {
        const long double F = m_bar * std::exp(p) + (gamma - static_cast<long double>(yv)) * p +
                              gamma * (p - mu) * (p - mu) / sigma2;
        return beta * F + 0.5L * (p - x) * (p - x);
      };
      const double oracle = golden_section(obj, out.z[0] - 2.0, out.z[0] + 2.0);
      REQUIRE_THAT(out.z[0], Catch::Matchers::WithinAbs(oracle, 1e-8));
    }
  }
  SECTION("counts at the mean with zero weights stay at the closed form") {
    const std::size_t n = 4;
    const double beta = 1.3, m_bar = 5.0;
    const ProxParams params{beta, 0.0, 0.0, m_bar};
    const LogNormalParams prior(
        0.0, StationaryCovariance(RadialBinning::linear(n, n, 2), std::vector<double>(2, 1.0)));
    CountGrid y(n, n, 5);
    const GaussianField out =
        prox_data(GaussianField(RealGrid(n, n, 0.0)), params, prior, y, ProxMode::paper);
    const double v = beta * m_bar;
    const double expected = v - lambert_w(beta * m_bar * std::exp(v));
    for (double p : out.z) REQUIRE_THAT(p, Catch::Matchers::WithinAbs(expected, 1e-11));
  }
  SECTION("exact mode rejects a non-flat spectrum when gamma > 0") {
    RadialBinning binning = RadialBinning::linear(8, 8, 2);
    const StationaryCovariance cov(binning, {1.0, 2.0});
    const ProxParams params{1.0, 0.5, 0.0, 1.0};
    const LogNormalParams prior(0.0, cov);
    CountGrid y(8, 8, 1);
    REQUIRE_THROWS_AS(
        prox_data(GaussianField(RealGrid(8, 8, 0.0)), params, prior, y, ProxMode::exact),
        std::domain_error);
  }
  SECTION("firmly nonexpansive in exact mode") {
    SeededRng rng(88);
    const std::size_t n = 8;
    const ProxParams params{0.8, 0.3, 0.0, 3.0};
    RadialBinning binning = RadialBinning::linear(n, n, 3);
    const LogNormalParams prior(-0.2,
                                StationaryCovariance(binning, std::vector<double>(3, 0.6)));
    CountGrid y(n, n);
    for (auto& c : y) c = rng.poisson(3.0);
    for (int trial = 0; trial < 20; ++trial) {
      RealGrid a(n, n), b(n, n);
      for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = 2.0 * rng.gaussian();
        b[i] = 2.0 * rng.gaussian();
      }
      const GaussianField pa = prox_data(GaussianField(a), params, prior, y, ProxMode::exact);
      const GaussianField pb = prox_data(GaussianField(b), params, prior, y, ProxMode::exact);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        num += (pa.z[i] - pb.z[i]) * (pa.z[i] - pb.z[i]);
        den += (a[i] - b[i]) * (a[i] - b[i]);
      }
      REQUIRE(std::sqrt(num) <= std::sqrt(den) + 1e-10);
    }
  }
}

TEST_CASE("prox_tight_frame") {
  const CosineDictionary dict(8, 8);
  SeededRng rng(99);
  std::vector<double> coeffs(dict.coeff_count());
  for (auto& c : coeffs) c = rng.gaussian();

  SECTION("identity inner prox leaves coefficients unchanged") {
    const auto out = prox_tight_frame(coeffs, [](const RealGrid& u) { return u; }, dict);
    for (std::size_t i = 0; i < coeffs.size(); ++i)
      REQUIRE_THAT(out[i], Catch::Matchers::WithinAbs(coeffs[i], 1e-12));
  }
  SECTION("orthobasis collapses to analysis of the inner prox") {
    const auto box = [](const RealGrid& u) {
      RealGrid out(u.width(), u.height());
      for (std::size_t i = 0; i < u.size(); ++i) out[i] = std::clamp(u[i], -0.5, 0.5);
      return out;
    };
    const auto out = prox_tight_frame(coeffs, box, dict);
    const auto direct = dict.forward(box(dict.synthesize(coeffs)));
    for (std::size_t i = 0; i < coeffs.size(); ++i)
      REQUIRE_THAT(out[i], Catch::Matchers::WithinAbs(direct[i], 1e-12));
  }
  SECTION("matches direct minimization for a quadratic inner prox") {
    // f(u) = sum w_i (u_i - b_i)^2 / 2, prox_f(v) = (v + w b) / (1 + w)
    RealGrid w(8, 8), b(8, 8);
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = 0.1 + rng.uniform();
      b[i] = rng.gaussian();
    }
    const auto quad_prox = [&](const RealGrid& v) {
      RealGrid out(8, 8);
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] + w[i] * b[i]) / (1.0 + w[i]);
      return out;
    };
    const auto out = prox_tight_frame(coeffs, quad_prox, dict);

    // oracle: gradient descent on f(Phi a) + ||a - coeffs||^2 / 2
    std::vector<double> a = coeffs;
    for (int it = 0; it < 4000; ++it) {
      const RealGrid u = dict.synthesize(a);
      RealGrid g(8, 8);
      for (std::size_t i = 0; i < u.size(); ++i) g[i] = w[i] * (u[i] - b[i]);
      const auto ga = dict.forward(g);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double grad = ga[i] + (a[i] - coeffs[i]);
        a[i] -= 0.4 * grad;
      }
    }
    for (std::size_t i = 0; i < a.size(); ++i)
      REQUIRE_THAT(out[i], Catch::Matchers::WithinAbs(a[i], 1e-6));
  }
}
