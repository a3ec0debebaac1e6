#pragma once

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "audiosds/error.hpp"

namespace audiosds {

using Complex = std::complex<double>;

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

/// Real-to-complex transform of a fixed length, backed by an FFTW plan.
/// Plans are created with FFTW_ESTIMATE so results do not depend on timing.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    if (n == 0) throw InvalidInput("FFT length must be positive");
    real_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    spec_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins()));
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, spec_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec_, real_, FFTW_ESTIMATE);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(real_);
    fftw_free(spec_);
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  /// Unnormalized forward DFT of `in`, zero-padded to size() when shorter.
  void forward(std::span<const double> in, std::span<Complex> out) {
    std::fill(real_, real_ + n_, 0.0);
    std::copy_n(in.begin(), std::min(in.size(), n_), real_);
    fftw_execute(forward_);
    for (std::size_t k = 0; k < bins(); ++k) out[k] = {spec_[k][0], spec_[k][1]};
  }

  std::vector<Complex> forward(std::span<const double> in) {
    std::vector<Complex> out(bins());
    forward(in, out);
    return out;
  }

  /// Unnormalized inverse: out[n] = sum_k X_k e^{2 pi i k n / N} over the
  /// Hermitian extension of the half spectrum. Imaginary parts of the DC and
  /// Nyquist bins are discarded.
  void inverse(std::span<const Complex> in, std::span<double> out) {
    for (std::size_t k = 0; k < bins(); ++k) {
      spec_[k][0] = in[k].real();
      spec_[k][1] = in[k].imag();
    }
    spec_[0][1] = 0.0;
    if (n_ % 2 == 0) spec_[n_ / 2][1] = 0.0;
    fftw_execute(inverse_);
    std::copy_n(real_, std::min(out.size(), n_), out.begin());
  }

  std::vector<double> inverse(std::span<const Complex> in) {
    std::vector<double> out(n_);
    inverse(in, out);
    return out;
  }

 private:
  std::size_t n_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

/// Per-thread plan cache; each thread owns its buffers.
inline RealFft& real_fft(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<RealFft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Linear convolution through a zero-padded FFT, truncated to `out_len`
/// samples (defaults to the full length a + b - 1).
inline std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b,
                                        std::size_t out_len = 0) {
  if (a.empty() || b.empty()) return {};
  const std::size_t full = a.size() + b.size() - 1;
  if (out_len == 0) out_len = full;
  auto& fft = real_fft(next_pow2(full));
  auto fa = fft.forward(a);
  auto fb = fft.forward(b);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  auto y = fft.inverse(fa);
  const double scale = 1.0 / static_cast<double>(fft.size());
  std::vector<double> out(out_len, 0.0);
  for (std::size_t i = 0; i < std::min(out_len, full); ++i) out[i] = y[i] * scale;
  return out;
}

/// Adjoint of truncated convolution with respect to its first argument:
/// out[m] = sum_k g[m + k] b[k] for m < out_len.
inline std::vector<double> fft_correlate(std::span<const double> g, std::span<const double> b,
                                         std::size_t out_len) {
  if (g.empty() || b.empty() || out_len == 0) return std::vector<double>(out_len, 0.0);
  // Correlation = convolution of g with reversed b, shifted by |b| - 1.
  std::vector<double> rb(b.rbegin(), b.rend());
  auto full = fft_convolve(g, rb);
  std::vector<double> out(out_len, 0.0);
  const std::size_t shift = b.size() - 1;
  for (std::size_t m = 0; m < out_len && m + shift < full.size(); ++m) out[m] = full[m + shift];
  return out;
}

}  // namespace audiosds
