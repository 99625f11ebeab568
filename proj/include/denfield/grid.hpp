#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "denfield/errors.hpp"

namespace denfield {

// Row-major W x H raster. Value type; cheap to move, safe to share by copy.
template <typename T>
class Grid {
public:
  Grid() = default;

  Grid(std::size_t width, std::size_t height, T fill = T{})
      : width_(width), height_(height), data_(width * height, fill) {}

  Grid(std::size_t width, std::size_t height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != width_ * height_)
      throw DimensionError("grid data size does not match width*height");
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t size() const { return data_.size(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t x, std::size_t y) { return data_[y * width_ + x]; }
  const T& at(std::size_t x, std::size_t y) const { return data_[y * width_ + x]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool same_shape(std::size_t w, std::size_t h) const { return width_ == w && height_ == h; }

  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
  }

private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<T> data_;
};

using RealGrid = Grid<double>;
using CountGrid = Grid<std::int64_t>;
using MaskGrid = Grid<std::uint8_t>;

namespace detail {

template <typename A, typename B>
inline void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(what) + ": shapes " + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                         std::to_string(b.height()));
}

}  // namespace detail

// Observed count map y with its binary mask M (1 = observed) and the mean
// expected count per pixel.
struct CountMap {
  CountGrid counts;
  MaskGrid mask;
  double mean_count = 1.0;

  CountMap() = default;

  CountMap(CountGrid counts_in, MaskGrid mask_in, double mean_count_in)
      : counts(std::move(counts_in)), mask(std::move(mask_in)), mean_count(mean_count_in) {
    detail::require_same_shape(counts, mask, "CountMap");
    if (!(mean_count > 0.0)) throw std::domain_error("CountMap: mean_count must be > 0");
    for (auto c : counts)
      if (c < 0) throw std::domain_error("CountMap: counts must be non-negative");
    for (auto m : mask)
      if (m != 0 && m != 1) throw std::domain_error("CountMap: mask values must be 0 or 1");
  }

  std::size_t width() const { return counts.width(); }
  std::size_t height() const { return counts.height(); }

  std::size_t observed_count() const {
    std::size_t n = 0;
    for (auto m : mask) n += m;
    return n;
  }

  double observed_fraction() const {
    return counts.size() == 0 ? 0.0
                              : static_cast<double>(observed_count()) / static_cast<double>(counts.size());
  }

  bool fully_observed() const { return observed_count() == mask.size(); }
};

// Density contrast field; 1 + delta > 0 everywhere (log-normal support).
struct DensityField {
  RealGrid delta;

  DensityField() = default;

  explicit DensityField(RealGrid delta_in) : delta(std::move(delta_in)) {
    for (double d : delta)
      if (!(d > -1.0)) throw std::domain_error("DensityField: requires delta > -1 everywhere");
  }

  std::size_t width() const { return delta.width(); }
  std::size_t height() const { return delta.height(); }
};

// Latent Gaussian field z = log(1 + delta); finite everywhere.
struct GaussianField {
  RealGrid z;

  GaussianField() = default;

  explicit GaussianField(RealGrid z_in) : z(std::move(z_in)) {
    for (double v : z)
      if (!std::isfinite(v)) throw std::domain_error("GaussianField: values must be finite");
  }

  std::size_t width() const { return z.width(); }
  std::size_t height() const { return z.height(); }
};

// Elementwise product with a {0,1} mask.
inline RealGrid apply_mask(const RealGrid& map, const MaskGrid& mask) {
  detail::require_same_shape(map, mask, "apply_mask");
  RealGrid out(map.width(), map.height());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = mask[i] ? map[i] : 0.0;
  return out;
}

inline double grid_mean(const RealGrid& g) {
  if (g.size() == 0) throw std::domain_error("grid_mean: empty grid");
  double s = 0.0;
  for (double v : g) s += v;
  return s / static_cast<double>(g.size());
}

}  // namespace denfield
