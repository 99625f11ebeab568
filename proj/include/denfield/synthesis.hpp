#pragma once

#include <cmath>

#include "denfield/grid.hpp"
#include "denfield/randfield.hpp"

namespace denfield {

struct ImputationConfig {
  int n_tex = 15;

  void validate() const {
    if (n_tex < 1) throw std::domain_error("ImputationConfig: n_tex must be >= 1");
  }
};

// Projection onto the observed-preservation set: keep reference where the
// mask is 1, keep delta elsewhere.
inline DensityField project_observed(const DensityField& delta, const DensityField& reference,
                                     const MaskGrid& mask) {
  detail::require_same_shape(delta.delta, mask, "project_observed");
  detail::require_same_shape(reference.delta, mask, "project_observed");
  RealGrid out(delta.width(), delta.height());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = mask[i] ? reference.delta[i] : delta.delta[i];
  return DensityField(std::move(out));
}

// Projection onto the mean constraint: z - mean(z) + mu.
inline GaussianField project_mean(const GaussianField& z, double mu) {
  const double shift = mu - grid_mean(z.z);
  RealGrid out(z.width(), z.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = z.z[i] + shift;
  return GaussianField(std::move(out));
}

// Covariance constraint: estimate the current binned spectrum S_z and scale
// each non-DC mode by sqrt(target / S_z) of its bin (the Sigma^1/2 S^-1/2
// sandwich under the stationary diagonal representation). Phases and the DC
// mode are untouched; degenerate bins use the estimator floor.
inline GaussianField project_cov(const GaussianField& z, const StationaryCovariance& target) {
  const StationaryCovariance current = estimate_spectrum(z, target.binning);
  std::vector<double> ratio(target.spectrum.size());
  for (std::size_t b = 0; b < ratio.size(); ++b)
    ratio[b] = std::sqrt(target.spectrum[b] / current.spectrum[b]);
  RealGrid out = detail::apply_mode_multiplier(z.z, target.binning, ratio, 1.0);
  return GaussianField(std::move(out));
}

// The constraint-projection loop of the texture synthesis: per iteration,
// mean projection, covariance projection, then observed-part restoration.
// A zero mask runs the loop unconstrained by observations.
inline DensityField texture_synthesize(const DensityField& start, const LogNormalParams& prior,
                                       const MaskGrid& mask, const DensityField& reference,
                                       int n_tex) {
  detail::require_same_shape(start.delta, mask, "texture_synthesize");
  DensityField p = start;
  for (int t = 0; t < n_tex; ++t) {
    RealGrid zr(p.width(), p.height());
    for (std::size_t i = 0; i < zr.size(); ++i) zr[i] = std::log1p(p.delta[i]);
    GaussianField z(std::move(zr));
    z = project_mean(z, prior.mu);
    z = project_cov(z, prior.cov);
    RealGrid next(p.width(), p.height());
    for (std::size_t i = 0; i < next.size(); ++i)
      next[i] = mask[i] ? reference.delta[i] : std::expm1(z.z[i]);
    p = DensityField(std::move(next));
  }
  return p;
}

// E-step imputation: fill the missing area of the current density estimate
// with a log-normal draw, run the projection loop, Poisson-sample the
// completed intensity and splice the original counts back over the observed
// region. The output is fully observed and never alters observed counts.
inline CountMap impute(const CountMap& y, const DensityField& delta_hat,
                       const LogNormalParams& prior, double m_bar, const ImputationConfig& config,
                       SeededRng& rng) {
  config.validate();
  detail::require_same_shape(y.counts, delta_hat.delta, "impute");
  if (y.observed_count() == 0) throw std::domain_error("impute: no observed pixels");
  if (!(m_bar > 0.0)) throw std::domain_error("impute: m_bar must be > 0");

  const DensityField draw = sample_lognormal_field(prior, rng);
  RealGrid p0(y.width(), y.height());
  for (std::size_t i = 0; i < p0.size(); ++i)
    p0[i] = y.mask[i] ? delta_hat.delta[i] : draw.delta[i];

  const DensityField completed =
      texture_synthesize(DensityField(std::move(p0)), prior, y.mask, delta_hat, config.n_tex);

  RealGrid intensity(y.width(), y.height());
  for (std::size_t i = 0; i < intensity.size(); ++i)
    intensity[i] = m_bar * (1.0 + completed.delta[i]);
  const CountGrid sampled = poisson_sample(intensity, rng);

  CountGrid counts(y.width(), y.height());
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] = y.mask[i] ? y.counts[i] : sampled[i];
  MaskGrid full(y.width(), y.height(), 1);
  return CountMap(std::move(counts), std::move(full), m_bar);
}

}  // namespace denfield
