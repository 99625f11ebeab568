#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "denfield/rng.hpp"
#include "denfield/transform.hpp"

using namespace denfield;

namespace {

RealGrid random_grid(std::size_t w, std::size_t h, SeededRng& rng) {
  RealGrid g(w, h);
  for (auto& v : g) v = rng.gaussian();
  return g;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Orthobasis with the synthesis side deliberately doubled; a consistent
// tight frame scaled that way would have constant 4.
class MisScaledDictionary final : public Dictionary {
public:
  MisScaledDictionary(std::size_t w, std::size_t h) : inner_(w, h) {}
  std::size_t width() const override { return inner_.width(); }
  std::size_t height() const override { return inner_.height(); }
  std::size_t coeff_count() const override { return inner_.coeff_count(); }
  double frame_constant() const override { return 4.0; }
  std::vector<double> forward(const RealGrid& map) const override { return inner_.forward(map); }
  RealGrid synthesize(std::span<const double> coeffs) const override {
    RealGrid out = inner_.synthesize(coeffs);
    for (auto& v : out) v *= 2.0;
    return out;
  }

private:
  CosineDictionary inner_;
};

}  // namespace

TEST_CASE("cosine dictionary forward") {
  const CosineDictionary dict(16, 12);
  SeededRng rng(31);

  SECTION("zero map gives zero coefficients") {
    const auto coeffs = dict.forward(RealGrid(16, 12, 0.0));
    for (double c : coeffs) REQUIRE(c == 0.0);
  }
  SECTION("a basis atom analyzes to a one-hot vector") {
    std::vector<double> onehot(dict.coeff_count(), 0.0);
    onehot[37] = 1.0;
    const RealGrid atom = dict.synthesize(onehot);
    double norm2 = 0.0;
    for (double v : atom) norm2 += v * v;
    REQUIRE_THAT(norm2, Catch::Matchers::WithinAbs(1.0, 1e-12));  // unit atoms
    const auto back = dict.forward(atom);
    for (std::size_t i = 0; i < back.size(); ++i)
      REQUIRE_THAT(back[i], Catch::Matchers::WithinAbs(i == 37 ? 1.0 : 0.0, 1e-12));
  }
  SECTION("Parseval") {
    for (int trial = 0; trial < 5; ++trial) {
      const RealGrid x = random_grid(16, 12, rng);
      double nx = 0.0;
      for (double v : x) nx += v * v;
      const auto coeffs = dict.forward(x);
      REQUIRE_THAT(dot(coeffs, coeffs), Catch::Matchers::WithinRel(nx, 1e-10));
    }
  }
  SECTION("dimension mismatch throws") {
    REQUIRE_THROWS_AS(dict.forward(RealGrid(12, 16, 0.0)), DimensionError);
  }
}

TEST_CASE("cosine dictionary synthesize") {
  const CosineDictionary dict(8, 8);
  SeededRng rng(77);

  SECTION("forward then synthesize is the identity") {
    for (int trial = 0; trial < 5; ++trial) {
      const RealGrid x = random_grid(8, 8, rng);
      const RealGrid back = dict.synthesize(dict.forward(x));
      for (std::size_t i = 0; i < x.size(); ++i)
        REQUIRE_THAT(back[i], Catch::Matchers::WithinAbs(x[i], 1e-10));
    }
  }
  SECTION("zero coefficients give the zero map") {
    const RealGrid out = dict.synthesize(std::vector<double>(64, 0.0));
    for (double v : out) REQUIRE(v == 0.0);
  }
  SECTION("linearity") {
    std::vector<double> a(64), b(64), sum(64);
    for (std::size_t i = 0; i < 64; ++i) {
      a[i] = rng.gaussian();
      b[i] = rng.gaussian();
      sum[i] = a[i] + b[i];
    }
    const RealGrid sa = dict.synthesize(a);
    const RealGrid sb = dict.synthesize(b);
    const RealGrid ssum = dict.synthesize(sum);
    for (std::size_t i = 0; i < ssum.size(); ++i)
      REQUIRE_THAT(ssum[i], Catch::Matchers::WithinAbs(sa[i] + sb[i], 1e-12));
  }
  SECTION("length mismatch throws") {
    REQUIRE_THROWS_AS(dict.synthesize(std::vector<double>(63, 0.0)), DimensionError);
  }
}

TEST_CASE("adjointness of forward and synthesize") {
  const CosineDictionary dict(16, 16);
  SeededRng rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    const RealGrid x = random_grid(16, 16, rng);
    std::vector<double> a(dict.coeff_count());
    for (auto& v : a) v = rng.gaussian();
    const auto fx = dict.forward(x);
    const RealGrid sa = dict.synthesize(a);
    double lhs = dot(fx, a);
    double rhs = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * sa[i];
    REQUIRE_THAT(lhs, Catch::Matchers::WithinRel(rhs, 1e-10));
  }
}

TEST_CASE("verify_tight_frame") {
  SECTION("orthonormal default stays within 1e-10") {
    const CosineDictionary dict(16, 16);
    SeededRng rng(9);
    REQUIRE(verify_tight_frame(dict, 20, rng) <= 1e-10);
  }
  SECTION("mis-scaled synthesis reports a deviation of about 3") {
    // actual ||forward(x)||^2 = ||x||^2 while the claimed constant is 4
    const MisScaledDictionary dict(8, 8);
    SeededRng rng(9);
    REQUIRE_THAT(verify_tight_frame(dict, 20, rng), Catch::Matchers::WithinAbs(3.0, 1e-10));
  }
  SECTION("zero trials is rejected") {
    const CosineDictionary dict(8, 8);
    SeededRng rng(9);
    REQUIRE_THROWS_AS(verify_tight_frame(dict, 0, rng), std::domain_error);
  }
}
