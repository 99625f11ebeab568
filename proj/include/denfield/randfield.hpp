#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "denfield/binning.hpp"
#include "denfield/fft.hpp"
#include "denfield/grid.hpp"
#include "denfield/rng.hpp"

namespace denfield {

// Isotropic stationary covariance of the latent Gaussian field, stored as a
// positive power spectrum per radial frequency bin. The operator is diagonal
// in the Fourier domain: mode k carries the value of its bin. The DC mode is
// outside every bin; all spectral operators pass it through unchanged (the
// stationary mean is handled separately).
//
// Normalization: the per-mode power of a field z is |Z[k]|^2 / n with Z the
// unnormalized DFT, so white noise of pixel variance v has a flat spectrum
// of level v, and the marginal pixel variance equals the mean of the
// spectrum over all non-DC modes.
struct StationaryCovariance {
  RadialBinning binning;
  std::vector<double> spectrum;

  StationaryCovariance(RadialBinning binning_in, std::vector<double> spectrum_in)
      : binning(std::move(binning_in)), spectrum(std::move(spectrum_in)) {
    if (spectrum.size() != binning.bin_count())
      throw DimensionError("StationaryCovariance: spectrum length != bin count");
    for (double s : spectrum)
      if (!(s > 0.0) || !std::isfinite(s))
        throw std::domain_error("StationaryCovariance: spectrum must be positive and finite");
  }

  std::size_t width() const { return binning.width(); }
  std::size_t height() const { return binning.height(); }

  // (1/n) * sum over non-DC modes of the bin value = marginal pixel variance
  // of a field synthesized from this spectrum (DC excluded).
  double total_latent_variance() const {
    double acc = 0.0;
    for (std::size_t b = 0; b < spectrum.size(); ++b)
      acc += spectrum[b] * static_cast<double>(binning.mode_counts()[b]);
    return acc / static_cast<double>(width() * height());
  }

  bool is_flat(double rel_tol = 1e-9) const {
    for (double s : spectrum)
      if (std::abs(s - spectrum[0]) > rel_tol * spectrum[0]) return false;
    return true;
  }
};

struct LogNormalParams {
  double mu = 0.0;
  StationaryCovariance cov;

  LogNormalParams(double mu_in, StationaryCovariance cov_in)
      : mu(mu_in), cov(std::move(cov_in)) {}
};

// |FFT(z)|^2 / n per mode, in FFT layout.
inline RealGrid power_grid(const RealGrid& z) {
  auto freq = fftutil::fft2(z);
  RealGrid out(z.width(), z.height());
  const double inv_n = 1.0 / static_cast<double>(z.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::norm(freq[i]) * inv_n;
  return out;
}

namespace detail {

// Multiplies every non-DC Fourier mode by its bin's multiplier and the DC
// mode by dc_factor; the multiplier depends only on |k|, so Hermitian
// symmetry and realness are preserved.
inline RealGrid apply_mode_multiplier(const RealGrid& field, const RadialBinning& binning,
                                      const std::vector<double>& per_bin, double dc_factor) {
  if (!field.same_shape(binning.width(), binning.height()))
    throw DimensionError("spectral operator: field does not match binning grid");
  if (per_bin.size() != binning.bin_count())
    throw DimensionError("spectral operator: multiplier count != bin count");
  for (double m : per_bin)
    if (!std::isfinite(m)) throw std::domain_error("spectral operator: non-finite mode multiplier");
  auto freq = fftutil::fft2(field);
  const auto& bins = binning.mode_bins();
  for (std::size_t i = 0; i < freq.size(); ++i)
    freq[i] *= (bins[i] < 0) ? dc_factor : per_bin[static_cast<std::size_t>(bins[i])];
  return fftutil::ifft2_real(freq, field.width(), field.height());
}

inline RealGrid apply_mode_multiplier(const RealGrid& field, const StationaryCovariance& cov,
                                      const std::function<double(double)>& factor,
                                      double dc_factor) {
  std::vector<double> per_bin(cov.spectrum.size());
  for (std::size_t b = 0; b < per_bin.size(); ++b) per_bin[b] = factor(cov.spectrum[b]);
  return apply_mode_multiplier(field, cov.binning, per_bin, dc_factor);
}

}  // namespace detail

// Applies Sigma^exponent in the diagonal Fourier representation; DC passes
// through unchanged.
inline GaussianField apply_cov_power(const GaussianField& field, const StationaryCovariance& cov,
                                     double exponent) {
  for (double s : cov.spectrum)
    if (!(s > 0.0)) throw std::domain_error("apply_cov_power: spectrum must be positive");
  RealGrid out = detail::apply_mode_multiplier(
      field.z, cov, [exponent](double s) { return std::pow(s, exponent); }, 1.0);
  return GaussianField(std::move(out));
}

// Draws z = mu + Sigma^(1/2) * white noise and returns delta = exp(z) - 1,
// which satisfies delta > -1 by construction. The white draw is centered
// before coloring: the stationary mean is the deterministic mu, so the DC
// mode carries no randomness.
inline DensityField sample_lognormal_field(const LogNormalParams& params, SeededRng& rng) {
  RealGrid white(params.cov.width(), params.cov.height());
  for (auto& v : white.data()) v = rng.gaussian();
  const double mean = grid_mean(white);
  for (auto& v : white.data()) v -= mean;
  GaussianField colored = apply_cov_power(GaussianField(std::move(white)), params.cov, 0.5);
  RealGrid delta(colored.width(), colored.height());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = std::expm1(params.mu + colored.z[i]);
  return DensityField(std::move(delta));
}

// Arithmetic mean over observed (or all) pixels.
inline double estimate_mean(const GaussianField& z, const MaskGrid* mask = nullptr) {
  if (!mask) return grid_mean(z.z);
  detail::require_same_shape(z.z, *mask, "estimate_mean");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < z.z.size(); ++i) {
    if ((*mask)[i]) {
      sum += z.z[i];
      ++count;
    }
  }
  if (count == 0) throw std::domain_error("estimate_mean: mask has no observed pixels");
  return sum / static_cast<double>(count);
}

// Mean-subtracted periodogram radially averaged into bins. With a mask the
// field is zeroed outside the observed region and the periodogram divided by
// the observed fraction (uniform deconvolution approximation). Every bin is
// floored at 1e-12 so the result is a valid covariance.
inline StationaryCovariance estimate_spectrum(const GaussianField& z, const RadialBinning& binning,
                                              const MaskGrid* mask = nullptr) {
  constexpr double kFloor = 1e-12;
  if (!z.z.same_shape(binning.width(), binning.height()))
    throw DimensionError("estimate_spectrum: field does not match binning grid");
  const double mean = estimate_mean(z, mask);  // throws on empty mask
  RealGrid resid(z.width(), z.height());
  double fraction = 1.0;
  if (mask) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < resid.size(); ++i) {
      resid[i] = (*mask)[i] ? (z.z[i] - mean) : 0.0;
      count += (*mask)[i];
    }
    fraction = static_cast<double>(count) / static_cast<double>(resid.size());
  } else {
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = z.z[i] - mean;
  }

  RealGrid power = power_grid(resid);
  const auto bins = radial_average(power, binning);
  std::vector<double> spectrum(binning.bin_count(), kFloor);
  for (std::size_t b = 0; b < spectrum.size(); ++b)
    if (bins[b].has_value()) spectrum[b] = std::max(*bins[b] / fraction, kFloor);
  return StationaryCovariance(binning, std::move(spectrum));
}

// Zeroes every Fourier mode with |k| > kmax (cycles per pixel); the DC mode
// always passes.
inline RealGrid lowpass(const RealGrid& map, double kmax) {
  auto freq = fftutil::fft2(map);
  const std::size_t w = map.width(), h = map.height();
  for (std::size_t iy = 0; iy < h; ++iy)
    for (std::size_t ix = 0; ix < w; ++ix)
      if (RadialBinning::mode_frequency(ix, iy, w, h) > kmax) freq[iy * w + ix] = 0.0;
  return fftutil::ifft2_real(freq, w, h);
}

// Independent Poisson draws per pixel, row-major order.
inline CountGrid poisson_sample(const RealGrid& intensity, SeededRng& rng) {
  CountGrid counts(intensity.width(), intensity.height());
  for (std::size_t i = 0; i < intensity.size(); ++i) {
    if (!(intensity[i] >= 0.0))
      throw std::domain_error("poisson_sample: intensity must be non-negative");
    counts[i] = rng.poisson(intensity[i]);
  }
  return counts;
}

}  // namespace denfield
