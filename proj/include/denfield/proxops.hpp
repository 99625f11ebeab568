#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "denfield/grid.hpp"
#include "denfield/randfield.hpp"
#include "denfield/transform.hpp"

namespace denfield {

// Weights of the composite data-fidelity term
//   F(x) = mbar * sum exp(x_i) + (gamma 1 - y)^T x + gamma ||x - mu||^2_{Sigma^-1}
// together with the proximal step beta. The operator K = I + gamma beta
// Sigma^-1 of the closed-form prox materializes as a per-bin diagonal.
struct ProxParams {
  double beta = 1.0;        // proximal step
  double gamma = 0.0;       // log-normal prior weight
  double lambda = 0.0;      // sparsity weight (used by the solver, not prox_data)
  double mean_count = 1.0;  // mbar

  void validate() const {
    if (!(beta > 0.0)) throw std::domain_error("ProxParams: beta must be > 0");
    if (!(gamma >= 0.0)) throw std::domain_error("ProxParams: gamma must be >= 0");
    if (!(lambda >= 0.0)) throw std::domain_error("ProxParams: lambda must be >= 0");
    if (!(mean_count > 0.0)) throw std::domain_error("ProxParams: mean_count must be > 0");
  }
};

inline double soft_threshold(double x, double t) {
  if (t < 0.0) throw std::domain_error("soft_threshold: threshold must be >= 0");
  const double mag = std::abs(x) - t;
  return mag > 0.0 ? std::copysign(mag, x) : 0.0;
}

inline std::vector<double> soft_threshold(std::span<const double> x, double t) {
  if (t < 0.0) throw std::domain_error("soft_threshold: threshold must be >= 0");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double mag = std::abs(x[i]) - t;
    out[i] = mag > 0.0 ? std::copysign(mag, x[i]) : 0.0;
  }
  return out;
}

namespace detail {

// W(exp(u)) for u > 700, where exp(u) overflows: Newton on
// h(w) = w + log w - u starting from the asymptotic guess u - log u.
inline double lambert_w_log_form(double u) {
  double w = u - std::log(u);
  for (int iter = 0; iter < 32; ++iter) {
    const double step = (u - w - std::log(w)) * w / (w + 1.0);
    w += step;
    if (std::abs(step) <= 1e-16 * w) break;
  }
  return w;
}

}  // namespace detail

// Principal branch of the Lambert W function (w e^w = x for x >= -1/e).
// Halley iteration from a piecewise initial guess; relative residual of
// w e^w against x stays below 1e-12 over [-1/e, 1e306].
inline double lambert_w(double x) {
  constexpr double kInvE = 0.36787944117144232159552377016146;  // 1/e
  if (!(x >= -kInvE)) throw std::domain_error("lambert_w: argument below -1/e");
  if (x == 0.0) return 0.0;

  double w;
  if (x < -0.3) {
    // branch-point expansion in p = sqrt(2 (e x + 1))
    const double p = std::sqrt(2.0 * (std::exp(1.0) * x + 1.0));
    w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
  } else if (x < 0.3) {
    w = x * (1.0 + x * (-1.0 + x * (1.5 - 8.0 / 3.0 * x)));
  } else if (x < 1.0) {
    w = 0.2368 + (x - 0.3) * 0.472;  // chord through W(0.3), W(1)
  } else if (x < 3.0) {
    w = 0.5671 + (x - 1.0) * 0.241;  // chord through W(1), W(3)
  } else {
    const double l = std::log(x);
    const double ll = std::log(l);
    w = l - ll + ll / l;
  }

  for (int iter = 0; iter < 48; ++iter) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    if (denom == 0.0) break;
    const double step = f / denom;
    w -= step;
    if (w <= -1.0) w = -1.0 + 1e-12;  // stay on the principal branch
    if (std::abs(step) <= 1e-16 * (1.0 + std::abs(w))) break;
  }
  return w;
}

// W(exp(u)) without forming exp(u); valid for all finite u.
inline double lambert_w_exp(double u) {
  if (u < -46.0) {
    const double e = std::exp(u);  // W(t) = t - t^2 + ...; t <= 1e-20 here
    return e * (1.0 - e);
  }
  if (u <= 700.0) return lambert_w(std::exp(u));
  return detail::lambert_w_log_form(u);
}

// Proximity operator of p -> a * exp(p) at x, i.e. the unique minimizer of
// a e^p + (p - x)^2 / 2, computed as x - W(a e^x) through the overflow-safe
// log path. Equal to the log form log(W(a e^x) / a) by W(t) e^{W(t)} = t.
inline double prox_scaled_exp(double x, double a) {
  if (!(a > 0.0)) throw std::domain_error("prox_scaled_exp: scale must be > 0");
  return x - lambert_w_exp(x + std::log(a));
}

enum class ProxMode { paper, exact };

// Proximity operator of beta * F at x (see ProxParams for F).
//
// paper mode composes K^-1 o prox_{beta mbar exp} o K^-1 applied to
// x + beta (y - gamma 1 + gamma beta Sigma^-1 mu), with K = I + gamma beta
// Sigma^-1 diagonal per frequency bin. The constant field mu is pure DC, and
// Sigma^-1 acts as the identity there, so the mu term reduces to the scalar
// gamma beta^2 mu. This composition is the closed form associated with the
// quadratic convention ||v||^2 = v^T Sigma^-1 v / 2.
//
// exact mode requires a flat spectrum sigma^2 (so Sigma = sigma^2 I) and
// solves the true stationarity condition of beta F + ||. - x||^2 / 2 with the
// full quadratic v^T Sigma^-1 v, per pixel:
//   kappa p + beta mbar e^p = r,  kappa = 1 + 2 gamma beta / sigma^2,
//   r = x + beta (y - gamma) + 2 gamma beta mu / sigma^2,
//   p = r/kappa - W((beta mbar / kappa) e^{r/kappa}).
// The two modes coincide when gamma = 0.
inline GaussianField prox_data(const GaussianField& x, const ProxParams& params,
                               const LogNormalParams& prior, const CountGrid& y, ProxMode mode) {
  params.validate();
  detail::require_same_shape(x.z, y, "prox_data");
  if (!x.z.same_shape(prior.cov.width(), prior.cov.height()))
    throw DimensionError("prox_data: field does not match prior grid");

  const double beta = params.beta;
  const double gamma = params.gamma;
  const double a = beta * params.mean_count;
  const double log_a_over = std::log(a);

  if (mode == ProxMode::exact || gamma == 0.0) {
    double kappa = 1.0;
    double mu_shift = 0.0;
    if (gamma > 0.0) {
      if (!prior.cov.is_flat())
        throw std::domain_error("prox_data: exact mode requires a flat spectrum");
      const double sigma2 = prior.cov.spectrum[0];
      kappa = 1.0 + 2.0 * gamma * beta / sigma2;
      mu_shift = 2.0 * gamma * beta * prior.mu / sigma2;
    }
    const double log_scale = std::log(a / kappa);
    RealGrid out(x.width(), x.height());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double r = x.z[i] + beta * (static_cast<double>(y[i]) - gamma) + mu_shift;
      const double t = r / kappa;
      out[i] = t - lambert_w_exp(t + log_scale);
    }
    return GaussianField(std::move(out));
  }

  // paper mode, gamma > 0
  RealGrid v(x.width(), x.height());
  const double mu_term = gamma * beta * beta * prior.mu;
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = x.z[i] + beta * (static_cast<double>(y[i]) - gamma) + mu_term;

  const auto k_inverse = [gamma, beta](double s) { return 1.0 / (1.0 + gamma * beta / s); };
  const double k_inverse_dc = 1.0 / (1.0 + gamma * beta);

  RealGrid t = detail::apply_mode_multiplier(v, prior.cov, k_inverse, k_inverse_dc);
  for (auto& ti : t.data()) ti -= lambert_w_exp(ti + log_a_over);
  RealGrid out = detail::apply_mode_multiplier(t, prior.cov, k_inverse, k_inverse_dc);
  return GaussianField(std::move(out));
}

// prox of f composed with a tight frame (Phi Phi^T = nu I):
//   coeffs + nu^-1 Phi^T (prox_f - I)(Phi coeffs).
inline std::vector<double> prox_tight_frame(std::span<const double> coeffs,
                                            const std::function<RealGrid(const RealGrid&)>& inner_prox,
                                            const Dictionary& dict) {
  const RealGrid mapped = dict.synthesize(coeffs);
  const RealGrid proxed = inner_prox(mapped);
  RealGrid diff(mapped.width(), mapped.height());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = proxed[i] - mapped[i];
  std::vector<double> correction = dict.forward(diff);
  std::vector<double> out(coeffs.begin(), coeffs.end());
  const double inv_nu = 1.0 / dict.frame_constant();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += inv_nu * correction[i];
  return out;
}

}  // namespace denfield
