#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "denfield/grid.hpp"
#include "denfield/io.hpp"
#include "denfield/randfield.hpp"
#include "denfield/solver.hpp"
#include "denfield/synthesis.hpp"

namespace denfield {

struct AugmentationConfig {
  int n_iter = 6;  // outer rounds
  int n_mi = 5;    // imputations per round
  ImputationConfig imputation;
  SolverConfig solver;
  std::uint64_t master_seed = 0;
  std::optional<RadialBinning> binning;  // defaults to RadialBinning::default_for

  void validate() const {
    if (n_iter < 1) throw std::domain_error("AugmentationConfig: n_iter must be >= 1");
    if (n_mi < 1) throw std::domain_error("AugmentationConfig: n_mi must be >= 1");
    imputation.validate();
    solver.validate();
  }
};

struct ParamsEstimate {
  double mu;
  StationaryCovariance cov;
  double m_bar;
};

struct PipelineResult {
  DensityField delta_hat;                       // pixelwise mean, last round
  ParamsEstimate params;                        // final averaged parameters
  std::vector<ParamsEstimate> history;          // one entry per outer round
  std::vector<std::vector<SolveTrace>> traces;  // [round][imputation]
  std::vector<double> density_spectrum;         // per-bin MI mean of the last
                                                // round's delta_i spectra
  CountMap last_completed;                      // last round, first imputation
};

// Moment estimates from the masked observation: mbar from observed counts,
// (mu, Sigma) from the masked log field log(max(y,1)/mbar).
inline ParamsEstimate initialize_params(const CountMap& y, const RadialBinning& binning) {
  const std::size_t observed = y.observed_count();
  if (observed == 0) throw std::domain_error("initialize_params: no observed pixels");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.counts.size(); ++i)
    if (y.mask[i]) sum += static_cast<double>(y.counts[i]);
  const double m_bar = sum / static_cast<double>(observed);
  if (!(m_bar > 0.0))
    throw std::domain_error("initialize_params: observed counts are all zero");

  RealGrid zr(y.width(), y.height(), 0.0);
  for (std::size_t i = 0; i < zr.size(); ++i)
    if (y.mask[i]) zr[i] = std::log(std::max(static_cast<double>(y.counts[i]), 1.0) / m_bar);
  const GaussianField z(std::move(zr));
  const double mu = estimate_mean(z, &y.mask);
  StationaryCovariance cov = estimate_spectrum(z, binning, &y.mask);
  return ParamsEstimate{mu, std::move(cov), m_bar};
}

inline ParamsEstimate average_params(std::span<const ParamsEstimate> estimates) {
  if (estimates.empty()) throw std::domain_error("average_params: empty list");
  const auto& first = estimates.front();
  double mu = 0.0, m_bar = 0.0;
  std::vector<double> spectrum(first.cov.spectrum.size(), 0.0);
  for (const auto& e : estimates) {
    if (!e.cov.binning.compatible(first.cov.binning))
      throw DimensionError("average_params: estimates use different binnings");
    mu += e.mu;
    m_bar += e.m_bar;
    for (std::size_t b = 0; b < spectrum.size(); ++b) spectrum[b] += e.cov.spectrum[b];
  }
  const double inv = 1.0 / static_cast<double>(estimates.size());
  mu *= inv;
  m_bar *= inv;
  for (auto& s : spectrum) s *= inv;
  return ParamsEstimate{mu, StationaryCovariance(first.cov.binning, std::move(spectrum)), m_bar};
}

// Outer data-augmentation loop: initialization, then n_iter rounds of n_mi
// imputations (E-step), per-imputation density estimation and parameter
// estimation (M-step), and parameter averaging. Each imputation draws its
// random stream from (master seed, "impute", round * n_mi + index), so runs
// are a pure function of the inputs, the configuration and the seed.
inline PipelineResult run_data_augmentation(const CountMap& y, const AugmentationConfig& config,
                                            const Dictionary& dict) {
  config.validate();
  if (!y.counts.same_shape(dict.width(), dict.height()))
    throw DimensionError("run_data_augmentation: observation does not match dictionary grid");

  const RadialBinning binning =
      config.binning ? *config.binning : RadialBinning::default_for(y.width(), y.height());
  ParamsEstimate params = initialize_params(y, binning);

  // Initial density estimate: the maximum-likelihood point value on observed
  // pixels; missing pixels are placeholders that the E-step overwrites.
  RealGrid delta0(y.width(), y.height(), 0.0);
  for (std::size_t i = 0; i < delta0.size(); ++i)
    if (y.mask[i])
      delta0[i] = std::max(static_cast<double>(y.counts[i]), 1.0) / params.m_bar - 1.0;
  DensityField delta_hat(std::move(delta0));

  const SeededRng master(config.master_seed);
  PipelineResult result{delta_hat,
                        params,
                        {},
                        {},
                        std::vector<double>(binning.bin_count(), 0.0),
                        CountMap()};

  for (int round = 0; round < config.n_iter; ++round) {
    const bool last_round = (round == config.n_iter - 1);
    std::vector<ParamsEstimate> round_estimates;
    std::vector<SolveTrace> round_traces;
    std::vector<DensityField> round_deltas;
    std::vector<double> spectrum_mean(binning.bin_count(), 0.0);

    const LogNormalParams prior{params.mu, params.cov};
    for (int i = 0; i < config.n_mi; ++i) {
      SeededRng rng = master.derive(
          "impute", static_cast<std::uint64_t>(round) * static_cast<std::uint64_t>(config.n_mi) +
                        static_cast<std::uint64_t>(i));
      CountMap completed = impute(y, delta_hat, prior, params.m_bar, config.imputation, rng);

      auto [delta_i, trace_i] = estimate_density(completed, prior, config.solver, dict);

      double count_mean = 0.0, density_mean = 0.0;
      for (std::size_t px = 0; px < completed.counts.size(); ++px) {
        count_mean += static_cast<double>(completed.counts[px]);
        density_mean += 1.0 + delta_i.delta[px];
      }
      const double mbar_i = count_mean / density_mean;

      // mu_i and Sigma_i come from the completed observation through the same
      // moment recipe the initialization uses. Estimating them from
      // log(1 + delta_i) instead feeds back the solver's deep negative values
      // at zero-count pixels (the gamma-weighted prior barely restrains them)
      // and the spectrum inflates round over round.
      RealGrid zr(completed.width(), completed.height());
      for (std::size_t px = 0; px < zr.size(); ++px)
        zr[px] =
            std::log(std::max(static_cast<double>(completed.counts[px]), 1.0) / mbar_i);
      const GaussianField z_i(std::move(zr));
      const double mu_i = estimate_mean(z_i);
      StationaryCovariance cov_i = estimate_spectrum(z_i, binning);

      if (last_round) {
        const StationaryCovariance ds = estimate_spectrum(GaussianField(delta_i.delta), binning);
        for (std::size_t b = 0; b < spectrum_mean.size(); ++b) spectrum_mean[b] += ds.spectrum[b];
        if (i == 0) result.last_completed = completed;
      }
      round_estimates.push_back(ParamsEstimate{mu_i, std::move(cov_i), mbar_i});
      round_traces.push_back(std::move(trace_i));
      round_deltas.push_back(std::move(delta_i));
    }

    params = average_params(round_estimates);
    result.history.push_back(params);
    result.traces.push_back(std::move(round_traces));

    RealGrid mean_delta(y.width(), y.height(), 0.0);
    for (std::size_t px = 0; px < mean_delta.size(); ++px) {
      double acc = 0.0;
      for (const auto& d : round_deltas) acc += d.delta[px];
      mean_delta[px] = acc / static_cast<double>(round_deltas.size());
    }
    delta_hat = DensityField(std::move(mean_delta));

    if (last_round) {
      for (auto& s : spectrum_mean) s /= static_cast<double>(config.n_mi);
      result.density_spectrum = spectrum_mean;
    }
  }

  result.delta_hat = delta_hat;
  result.params = params;
  return result;
}

// Comparison baseline: iterative soft-thresholding on the quadratic masked
// fidelity 0.5 || M (mbar (1 + Phi a) - y) ||^2 + lambda ||a||_1 with step
// 1 / (mbar^2 nu). Returns Phi a directly (no exponential model), so the
// output is a plain raster that may leave the delta > -1 region.
inline RealGrid baseline_quadratic_inpaint(const CountMap& y, const Dictionary& dict,
                                           double lambda, int n_iter) {
  if (!y.counts.same_shape(dict.width(), dict.height()))
    throw DimensionError("baseline_quadratic_inpaint: observation does not match dictionary");
  if (!(lambda >= 0.0)) throw std::domain_error("baseline_quadratic_inpaint: lambda must be >= 0");
  const double m_bar = y.mean_count;
  const double step = 1.0 / (m_bar * m_bar * dict.frame_constant());

  std::vector<double> alpha(dict.coeff_count(), 0.0);
  for (int t = 0; t < n_iter; ++t) {
    const RealGrid z = dict.synthesize(alpha);
    RealGrid resid(z.width(), z.height());
    for (std::size_t i = 0; i < resid.size(); ++i)
      resid[i] = y.mask[i] ? m_bar * (m_bar * (1.0 + z[i]) - static_cast<double>(y.counts[i]))
                           : 0.0;
    const std::vector<double> grad = dict.forward(resid);
    for (std::size_t i = 0; i < alpha.size(); ++i)
      alpha[i] = soft_threshold(alpha[i] - step * grad[i], lambda * step);
  }
  return dict.synthesize(alpha);
}

inline double baseline_objective(std::span<const double> alpha, const CountMap& y,
                                 const Dictionary& dict, double lambda) {
  const RealGrid z = dict.synthesize(alpha);
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!y.mask[i]) continue;
    const double r = y.mean_count * (1.0 + z[i]) - static_cast<double>(y.counts[i]);
    acc += 0.5 * r * r;
  }
  for (double a : alpha) acc += lambda * std::abs(a);
  return acc;
}

struct SpectrumComparison {
  std::vector<double> k_center;
  std::vector<double> truth;
  std::vector<std::string> names;
  std::vector<std::vector<double>> estimates;  // [name][bin]
  std::vector<std::vector<double>> rel_error;  // [name][bin]

  void write_csv(const std::string& path) const {
    std::string out = "k_bin_center,truth";
    for (const auto& n : names) out += "," + n;
    for (const auto& n : names) out += ",relerr_" + n;
    out += "\n";
    char buf[64];
    for (std::size_t b = 0; b < k_center.size(); ++b) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g", k_center[b], truth[b]);
      out += buf;
      for (const auto& e : estimates) {
        std::snprintf(buf, sizeof buf, ",%.17g", e[b]);
        out += buf;
      }
      for (const auto& e : rel_error) {
        std::snprintf(buf, sizeof buf, ",%.17g", e[b]);
        out += buf;
      }
      out += "\n";
    }
    detail::write_file_atomic(path, out);
  }
};

inline SpectrumComparison compare_spectra(
    const StationaryCovariance& truth,
    const std::vector<std::pair<std::string, StationaryCovariance>>& estimates) {
  SpectrumComparison cmp;
  for (std::size_t b = 0; b < truth.binning.bin_count(); ++b) {
    cmp.k_center.push_back(truth.binning.center(b));
    cmp.truth.push_back(truth.spectrum[b]);
  }
  for (const auto& [name, est] : estimates) {
    if (!est.binning.compatible(truth.binning))
      throw DimensionError("compare_spectra: estimate '" + name +
                           "' uses a different binning than the truth");
    cmp.names.push_back(name);
    std::vector<double> vals, errs;
    for (std::size_t b = 0; b < truth.spectrum.size(); ++b) {
      vals.push_back(est.spectrum[b]);
      errs.push_back(std::abs(est.spectrum[b] - truth.spectrum[b]) / truth.spectrum[b]);
    }
    cmp.estimates.push_back(std::move(vals));
    cmp.rel_error.push_back(std::move(errs));
  }
  return cmp;
}

}  // namespace denfield
