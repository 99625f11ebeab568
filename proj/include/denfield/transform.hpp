#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "denfield/fft.hpp"
#include "denfield/grid.hpp"
#include "denfield/rng.hpp"

namespace denfield {

// Analysis/synthesis pair for the sparsity prior. forward() applies the
// analysis transform (coefficients = basis^T * map), synthesize() the
// synthesis transform (map = basis * coefficients). A tight frame satisfies
// synthesize(forward(x)) = frame_constant * x; solver code must use only
// this interface so redundant frames can be slotted in behind it.
class Dictionary {
public:
  virtual ~Dictionary() = default;

  virtual std::size_t width() const = 0;
  virtual std::size_t height() const = 0;
  virtual std::size_t coeff_count() const = 0;
  virtual double frame_constant() const = 0;

  virtual std::vector<double> forward(const RealGrid& map) const = 0;
  virtual RealGrid synthesize(std::span<const double> coeffs) const = 0;

  std::size_t pixel_count() const { return width() * height(); }

protected:
  void require_map_shape(const RealGrid& map) const {
    if (!map.same_shape(width(), height()))
      throw DimensionError("Dictionary: map does not match transform grid");
  }
  void require_coeff_length(std::size_t len) const {
    if (len != coeff_count())
      throw DimensionError("Dictionary: coefficient vector has wrong length");
  }
};

// Orthonormal 2D type-II cosine basis (frame constant 1, L = n).
// Coefficient layout mirrors the grid: index ky * width + kx.
//
// With alpha(0) = sqrt(1/N), alpha(k>0) = sqrt(2/N) per axis, the
// orthonormal pair is
//   C[k] = alpha(k) * sum_x f[x] cos(pi (2x+1) k / 2N)
//   f[x] = sum_k alpha(k) C[k] cos(pi (2x+1) k / 2N)
// FFTW's REDFT10 carries a factor 2 per axis and REDFT01 weights k > 0
// terms by 2, so the forward output is scaled by alpha(k)/2 and the inverse
// input by alpha(0) at k = 0 and alpha(k)/2 otherwise.
class CosineDictionary final : public Dictionary {
public:
  CosineDictionary(std::size_t width, std::size_t height) : width_(width), height_(height) {
    if (width_ == 0 || height_ == 0) throw DimensionError("CosineDictionary: empty grid");
    fwd_x_ = axis_scales(width_, false);
    fwd_y_ = axis_scales(height_, false);
    inv_x_ = axis_scales(width_, true);
    inv_y_ = axis_scales(height_, true);
  }

  std::size_t width() const override { return width_; }
  std::size_t height() const override { return height_; }
  std::size_t coeff_count() const override { return width_ * height_; }
  double frame_constant() const override { return 1.0; }

  std::vector<double> forward(const RealGrid& map) const override {
    require_map_shape(map);
    std::vector<double> coeffs = fftutil::dct2(map);
    for (std::size_t ky = 0; ky < height_; ++ky)
      for (std::size_t kx = 0; kx < width_; ++kx)
        coeffs[ky * width_ + kx] *= fwd_y_[ky] * fwd_x_[kx];
    return coeffs;
  }

  RealGrid synthesize(std::span<const double> coeffs) const override {
    require_coeff_length(coeffs.size());
    std::vector<double> buf(coeffs.begin(), coeffs.end());
    for (std::size_t ky = 0; ky < height_; ++ky)
      for (std::size_t kx = 0; kx < width_; ++kx)
        buf[ky * width_ + kx] *= inv_y_[ky] * inv_x_[kx];
    std::vector<double> pixels = fftutil::dct3(std::move(buf), width_, height_);
    return RealGrid(width_, height_, std::move(pixels));
  }

private:
  static std::vector<double> axis_scales(std::size_t n, bool inverse) {
    std::vector<double> s(n);
    const double nn = static_cast<double>(n);
    const double a0 = std::sqrt(1.0 / nn);
    const double ak = std::sqrt(2.0 / nn);
    s[0] = inverse ? a0 : a0 / 2.0;
    for (std::size_t k = 1; k < n; ++k) s[k] = ak / 2.0;
    return s;
  }

  std::size_t width_;
  std::size_t height_;
  std::vector<double> fwd_x_, fwd_y_, inv_x_, inv_y_;
};

// Max over random maps of | ||forward(x)||^2 - frame_constant * ||x||^2 | / ||x||^2.
inline double verify_tight_frame(const Dictionary& dict, std::size_t trials, SeededRng& rng) {
  if (trials < 1) throw std::domain_error("verify_tight_frame: trials must be >= 1");
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    RealGrid x(dict.width(), dict.height());
    double norm2 = 0.0;
    for (auto& v : x.data()) {
      v = rng.gaussian();
      norm2 += v * v;
    }
    if (norm2 == 0.0) continue;
    const auto coeffs = dict.forward(x);
    double cnorm2 = 0.0;
    for (double c : coeffs) cnorm2 += c * c;
    worst = std::max(worst, std::abs(cnorm2 - dict.frame_constant() * norm2) / norm2);
  }
  return worst;
}

}  // namespace denfield
