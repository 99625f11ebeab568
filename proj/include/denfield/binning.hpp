#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "denfield/errors.hpp"
#include "denfield/grid.hpp"

namespace denfield {

// Radial bins over the frequency magnitude |k| of a W x H periodic grid,
// with k measured in cycles per pixel. Mode (kx, ky) folds to the signed
// frequency (fx/W, fy/H); the largest magnitude sits at the grid corner.
// The DC mode belongs to no bin; every other mode belongs to exactly one.
class RadialBinning {
public:
  static double mode_frequency(std::size_t ix, std::size_t iy, std::size_t width,
                               std::size_t height) {
    const auto w = static_cast<std::ptrdiff_t>(width);
    const auto h = static_cast<std::ptrdiff_t>(height);
    std::ptrdiff_t fx = static_cast<std::ptrdiff_t>(ix);
    std::ptrdiff_t fy = static_cast<std::ptrdiff_t>(iy);
    if (fx > w / 2) fx -= w;
    if (fy > h / 2) fy -= h;
    return std::hypot(static_cast<double>(fx) / static_cast<double>(w),
                      static_cast<double>(fy) / static_cast<double>(h));
  }

  static double max_frequency(std::size_t width, std::size_t height) {
    return std::hypot(static_cast<double>(width / 2) / static_cast<double>(width),
                      static_cast<double>(height / 2) / static_cast<double>(height));
  }

  static double fundamental_frequency(std::size_t width, std::size_t height) {
    return 1.0 / static_cast<double>(std::max(width, height));
  }

  RadialBinning(std::size_t width, std::size_t height, std::vector<double> edges)
      : width_(width), height_(height), edges_(std::move(edges)) {
    if (width_ == 0 || height_ == 0) throw DimensionError("RadialBinning: empty grid");
    if (edges_.size() < 2) throw std::domain_error("RadialBinning: need at least one bin");
    for (std::size_t i = 1; i < edges_.size(); ++i)
      if (!(edges_[i] > edges_[i - 1]))
        throw std::domain_error("RadialBinning: edges must be strictly increasing");
    index_modes();
  }

  static RadialBinning linear(std::size_t width, std::size_t height, std::size_t nbins) {
    const double kmax = max_frequency(width, height) * (1.0 + 1e-9);
    std::vector<double> edges(nbins + 1);
    for (std::size_t i = 0; i <= nbins; ++i)
      edges[i] = kmax * static_cast<double>(i) / static_cast<double>(nbins);
    return RadialBinning(width, height, std::move(edges));
  }

  // Geometrically spaced bins, greedily merged left to right so that every
  // bin holds at least min_modes modes (the low-|k| annuli are sparse).
  static RadialBinning logarithmic(std::size_t width, std::size_t height, std::size_t nbins,
                                   std::size_t min_modes = 1) {
    const double klo = fundamental_frequency(width, height) * (1.0 - 1e-9);
    const double khi = max_frequency(width, height) * (1.0 + 1e-9);
    std::vector<double> raw(nbins + 1);
    const double ratio = std::pow(khi / klo, 1.0 / static_cast<double>(nbins));
    raw[0] = klo;
    for (std::size_t i = 1; i <= nbins; ++i) raw[i] = raw[i - 1] * ratio;
    raw[nbins] = khi;
    if (min_modes <= 1) return RadialBinning(width, height, std::move(raw));

    RadialBinning fine(width, height, raw);
    std::vector<double> merged;
    merged.push_back(raw.front());
    std::size_t acc = 0;
    for (std::size_t b = 0; b < fine.bin_count(); ++b) {
      acc += fine.mode_counts()[b];
      if (acc >= min_modes) {
        merged.push_back(raw[b + 1]);
        acc = 0;
      }
    }
    // leftover modes join the last emitted bin
    if (acc > 0 && merged.size() > 1) merged.back() = raw.back();
    if (merged.size() < 2) merged.push_back(raw.back());
    return RadialBinning(width, height, std::move(merged));
  }

  static RadialBinning default_for(std::size_t width, std::size_t height) {
    const double side = static_cast<double>(std::min(width, height));
    const auto hint = static_cast<std::size_t>(
        std::max(4.0, std::round(2.0 * std::log2(std::max(2.0, side)))));
    return logarithmic(width, height, hint, 64);
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t bin_count() const { return edges_.size() - 1; }
  const std::vector<double>& edges() const { return edges_; }
  const std::vector<std::size_t>& mode_counts() const { return counts_; }

  double center(std::size_t bin) const { return 0.5 * (edges_[bin] + edges_[bin + 1]); }

  // -1 for the DC mode, otherwise the bin index of mode (ix, iy).
  std::int32_t bin_of_mode(std::size_t ix, std::size_t iy) const {
    return mode_bin_[iy * width_ + ix];
  }

  const std::vector<std::int32_t>& mode_bins() const { return mode_bin_; }

  bool compatible(const RadialBinning& other) const {
    return width_ == other.width_ && height_ == other.height_ && edges_ == other.edges_;
  }

private:
  void index_modes() {
    mode_bin_.assign(width_ * height_, -1);
    counts_.assign(bin_count(), 0);
    for (std::size_t iy = 0; iy < height_; ++iy) {
      for (std::size_t ix = 0; ix < width_; ++ix) {
        if (ix == 0 && iy == 0) continue;  // DC
        const double k = mode_frequency(ix, iy, width_, height_);
        auto it = std::upper_bound(edges_.begin(), edges_.end(), k);
        std::ptrdiff_t b = std::distance(edges_.begin(), it) - 1;
        if (b < 0 || static_cast<std::size_t>(b) >= bin_count()) {
          // clamp boundary modes into the nearest bin so coverage is total
          b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bin_count()) - 1);
          if (k < edges_.front() - 1e-9 || k > edges_.back() + 1e-9)
            throw std::domain_error("RadialBinning: edges do not cover all grid modes");
        }
        mode_bin_[iy * width_ + ix] = static_cast<std::int32_t>(b);
        ++counts_[static_cast<std::size_t>(b)];
      }
    }
  }

  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> edges_;
  std::vector<std::int32_t> mode_bin_;
  std::vector<std::size_t> counts_;
};

// Per-bin arithmetic mean of a frequency-domain power raster; empty bins
// are reported as absent, the DC mode is always excluded.
inline std::vector<std::optional<double>> radial_average(const RealGrid& power_grid,
                                                         const RadialBinning& binning) {
  if (!power_grid.same_shape(binning.width(), binning.height()))
    throw DimensionError("radial_average: power grid does not match binning grid");
  std::vector<double> sums(binning.bin_count(), 0.0);
  const auto& bins = binning.mode_bins();
  for (std::size_t i = 0; i < power_grid.size(); ++i)
    if (bins[i] >= 0) sums[static_cast<std::size_t>(bins[i])] += power_grid[i];
  std::vector<std::optional<double>> out(binning.bin_count());
  for (std::size_t b = 0; b < out.size(); ++b) {
    const auto c = binning.mode_counts()[b];
    if (c > 0) out[b] = sums[b] / static_cast<double>(c);
  }
  return out;
}

}  // namespace denfield
