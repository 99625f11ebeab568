#pragma once

#include <complex>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include <fftw3.h>

#include "denfield/grid.hpp"

// Thin FFTW wrappers. Plans are created once per (kind, height, width) with
// FFTW_ESTIMATE | FFTW_UNALIGNED and reused through the new-array execute
// interface, which is safe to call concurrently on distinct buffers. Plan
// creation itself is serialized. FFTW's row-major convention matches the
// Grid layout with n0 = height, n1 = width.

namespace denfield::fftutil {

enum class PlanKind { fft_forward, fft_backward, dct2, dct3 };

namespace detail {

inline fftw_plan get_plan(PlanKind kind, std::size_t height, std::size_t width) {
  static std::mutex mutex;
  static std::map<std::tuple<PlanKind, std::size_t, std::size_t>, fftw_plan> cache;

  std::lock_guard<std::mutex> lock(mutex);
  const auto key = std::make_tuple(kind, height, width);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  const int n0 = static_cast<int>(height);
  const int n1 = static_cast<int>(width);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  fftw_plan plan = nullptr;
  if (kind == PlanKind::fft_forward || kind == PlanKind::fft_backward) {
    std::vector<std::complex<double>> scratch(width * height);
    auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
    plan = fftw_plan_dft_2d(n0, n1, p, p,
                            kind == PlanKind::fft_forward ? FFTW_FORWARD : FFTW_BACKWARD, flags);
  } else {
    std::vector<double> scratch(width * height);
    const fftw_r2r_kind k = (kind == PlanKind::dct2) ? FFTW_REDFT10 : FFTW_REDFT01;
    const fftw_r2r_kind kinds[2] = {k, k};
    plan = fftw_plan_r2r_2d(n0, n1, scratch.data(), scratch.data(), kinds[0], kinds[1], flags);
  }
  cache.emplace(key, plan);
  return plan;
}

}  // namespace detail

// Unnormalized forward DFT of a real grid; output in FFT mode layout
// (index ky*W + kx).
inline std::vector<std::complex<double>> fft2(const RealGrid& in) {
  std::vector<std::complex<double>> buf(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) buf[i] = {in[i], 0.0};
  fftw_plan plan = detail::get_plan(PlanKind::fft_forward, in.height(), in.width());
  auto* p = reinterpret_cast<fftw_complex*>(buf.data());
  fftw_execute_dft(plan, p, p);
  return buf;
}

// Inverse DFT including the 1/n normalization; returns the real part.
inline RealGrid ifft2_real(std::vector<std::complex<double>>& freq, std::size_t width,
                           std::size_t height) {
  fftw_plan plan = detail::get_plan(PlanKind::fft_backward, height, width);
  auto* p = reinterpret_cast<fftw_complex*>(freq.data());
  fftw_execute_dft(plan, p, p);
  RealGrid out(width, height);
  const double inv_n = 1.0 / static_cast<double>(width * height);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = freq[i].real() * inv_n;
  return out;
}

// Unnormalized 2D DCT-II (FFTW REDFT10).
inline std::vector<double> dct2(const RealGrid& in) {
  std::vector<double> buf(in.data());
  fftw_plan plan = detail::get_plan(PlanKind::dct2, in.height(), in.width());
  fftw_execute_r2r(plan, buf.data(), buf.data());
  return buf;
}

// Unnormalized 2D DCT-III (FFTW REDFT01).
inline std::vector<double> dct3(std::vector<double> in, std::size_t width, std::size_t height) {
  fftw_plan plan = detail::get_plan(PlanKind::dct3, height, width);
  fftw_execute_r2r(plan, in.data(), in.data());
  return in;
}

}  // namespace denfield::fftutil
