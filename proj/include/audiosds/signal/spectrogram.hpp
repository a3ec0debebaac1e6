#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "audiosds/error.hpp"
#include "audiosds/signal/fft.hpp"
#include "audiosds/signal/waveform.hpp"

namespace audiosds {

/// Window sizes of a multiscale STFT. Every scale uses a periodic Hann window
/// and hop = round(window * hop_fraction).
struct SpectrogramConfig {
  std::vector<std::size_t> window_sizes{1024, 2048, 4096};
  double hop_fraction = 0.25;

  std::size_t hop(std::size_t window) const {
    const auto h = static_cast<std::size_t>(std::lround(static_cast<double>(window) * hop_fraction));
    return h < 1 ? 1 : h;
  }

  void validate() const {
    if (window_sizes.empty()) throw InvalidInput("spectrogram config needs at least one window size");
    for (auto w : window_sizes) {
      if (w < 2 || w % 2 != 0)
        throw InvalidInput("window sizes must be even and >= 2, got " + std::to_string(w));
    }
    if (!(hop_fraction > 0.0) || !std::isfinite(hop_fraction))
      throw InvalidInput("hop fraction must be positive");
  }

  bool operator==(const SpectrogramConfig&) const = default;
};

inline std::vector<double> periodic_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

/// Frames needed to cover `samples` when only the tail is zero-padded.
inline std::size_t stft_frame_count(std::size_t samples, std::size_t window, std::size_t hop) {
  if (samples <= window) return 1;
  return (samples - window + hop - 1) / hop + 1;
}

/// |STFT| of one window size: bins x frames x 2 channels, stored
/// channel-major, then frame, then bin.
struct MagnitudeGrid {
  std::size_t window = 0;
  std::size_t hop = 0;
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> values;

  MagnitudeGrid() = default;
  MagnitudeGrid(std::size_t window_, std::size_t hop_, std::size_t frames_)
      : window(window_), hop(hop_), bins(window_ / 2 + 1), frames(frames_),
        values(Waveform::kChannels * bins * frames_, 0.0) {}

  double& at(std::size_t channel, std::size_t frame, std::size_t bin) {
    return values[(channel * frames + frame) * bins + bin];
  }
  double at(std::size_t channel, std::size_t frame, std::size_t bin) const {
    return values[(channel * frames + frame) * bins + bin];
  }
  std::span<const double> frame(std::size_t channel, std::size_t f) const {
    return {values.data() + (channel * frames + f) * bins, bins};
  }
  bool same_shape(const MagnitudeGrid& o) const {
    return window == o.window && hop == o.hop && bins == o.bins && frames == o.frames;
  }
};

/// One magnitude grid per configured window size.
struct SpectrogramStack {
  SpectrogramConfig config;
  std::vector<MagnitudeGrid> scales;

  bool same_shape(const SpectrogramStack& o) const {
    if (scales.size() != o.scales.size()) return false;
    for (std::size_t m = 0; m < scales.size(); ++m)
      if (!scales[m].same_shape(o.scales[m])) return false;
    return true;
  }

  SpectrogramStack zeros_like() const {
    SpectrogramStack z = *this;
    for (auto& g : z.scales) std::fill(g.values.begin(), g.values.end(), 0.0);
    return z;
  }

  /// this += s * o
  void axpy(double s, const SpectrogramStack& o) {
    if (!same_shape(o)) throw InvalidInput("spectrogram stack shapes differ");
    for (std::size_t m = 0; m < scales.size(); ++m)
      for (std::size_t i = 0; i < scales[m].values.size(); ++i) scales[m].values[i] += s * o.scales[m].values[i];
  }

  double inner(const SpectrogramStack& o) const {
    if (!same_shape(o)) throw InvalidInput("spectrogram stack shapes differ");
    double acc = 0.0;
    for (std::size_t m = 0; m < scales.size(); ++m) acc += dot(scales[m].values, o.scales[m].values);
    return acc;
  }

  double squared_norm() const { return inner(*this); }
};

/// |STFT| of both channels with a periodic Hann window. The tail is
/// zero-padded so every sample lies inside at least one frame.
inline MagnitudeGrid stft_magnitude(const Waveform& w, std::size_t window, std::size_t hop) {
  if (w.empty()) throw InvalidInput("stft of an empty waveform");
  if (window < 2 || hop < 1) throw InvalidInput("invalid STFT window/hop");
  const std::size_t frames = stft_frame_count(w.frames(), window, hop);
  MagnitudeGrid grid(window, hop, frames);
  const auto hann = periodic_hann(window);
  auto& fft = real_fft(window);
  std::vector<double> buf(window);
  std::vector<Complex> spec(fft.bins());
  for (std::size_t c = 0; c < Waveform::kChannels; ++c) {
    const auto x = w.channel(c);
    for (std::size_t f = 0; f < frames; ++f) {
      const std::size_t start = f * hop;
      for (std::size_t i = 0; i < window; ++i) {
        const std::size_t n = start + i;
        buf[i] = n < x.size() ? x[n] * hann[i] : 0.0;
      }
      fft.forward(buf, spec);
      for (std::size_t k = 0; k < grid.bins; ++k) grid.at(c, f, k) = std::abs(spec[k]);
    }
  }
  return grid;
}

inline SpectrogramStack multiscale_spectrogram(const Waveform& w, const SpectrogramConfig& cfg) {
  cfg.validate();
  SpectrogramStack stack;
  stack.config = cfg;
  stack.scales.reserve(cfg.window_sizes.size());
  for (auto win : cfg.window_sizes) stack.scales.push_back(stft_magnitude(w, win, cfg.hop(win)));
  return stack;
}

/// Vector-Jacobian product of one magnitude grid at `w`. The STFT is linear
/// and its adjoint is an inverse real FFT; the magnitude contributes the unit
/// phasor X/|X| (taken as 0 where |X| = 0).
inline void stft_magnitude_vjp_accumulate(const Waveform& w, const MagnitudeGrid& cotangent,
                                          Waveform& grad) {
  const std::size_t window = cotangent.window;
  const std::size_t hop = cotangent.hop;
  const auto hann = periodic_hann(window);
  auto& fft = real_fft(window);
  std::vector<double> buf(window);
  std::vector<Complex> spec(fft.bins());
  std::vector<double> back(window);
  const std::size_t nyquist = window / 2;
  for (std::size_t c = 0; c < Waveform::kChannels; ++c) {
    const auto x = w.channel(c);
    auto g = grad.channel(c);
    for (std::size_t f = 0; f < cotangent.frames; ++f) {
      const auto y = cotangent.frame(c, f);
      bool any = false;
      for (double v : y) any = any || v != 0.0;
      if (!any) continue;
      const std::size_t start = f * hop;
      for (std::size_t i = 0; i < window; ++i) {
        const std::size_t n = start + i;
        buf[i] = n < x.size() ? x[n] * hann[i] : 0.0;
      }
      fft.forward(buf, spec);
      for (std::size_t k = 0; k < spec.size(); ++k) {
        const double mag = std::abs(spec[k]);
        Complex z = mag > 0.0 ? spec[k] * (y[k] / mag) : Complex{0.0, 0.0};
        // c2r doubles interior bins through the Hermitian mirror.
        if (k != 0 && k != nyquist) z *= 0.5;
        spec[k] = z;
      }
      fft.inverse(spec, back);
      for (std::size_t i = 0; i < window; ++i) {
        const std::size_t n = start + i;
        if (n < g.size()) g[n] += hann[i] * back[i];
      }
    }
  }
}

inline Waveform multiscale_vjp(const Waveform& w, const SpectrogramStack& cotangent,
                               const SpectrogramConfig& cfg) {
  cfg.validate();
  if (w.empty()) throw InvalidInput("vjp of an empty waveform");
  if (cotangent.scales.size() != cfg.window_sizes.size())
    throw InvalidInput("cotangent scale count does not match config");
  for (std::size_t m = 0; m < cfg.window_sizes.size(); ++m) {
    const auto win = cfg.window_sizes[m];
    const auto& g = cotangent.scales[m];
    const auto hop = cfg.hop(win);
    if (g.window != win || g.hop != hop || g.bins != win / 2 + 1 ||
        g.frames != stft_frame_count(w.frames(), win, hop) ||
        g.values.size() != Waveform::kChannels * g.bins * g.frames)
      throw InvalidInput("cotangent shape mismatch at scale " + std::to_string(m));
  }
  Waveform grad(w.frames(), w.sample_rate());
  for (const auto& g : cotangent.scales) stft_magnitude_vjp_accumulate(w, g, grad);
  return grad;
}

struct LossAndGradient {
  double loss = 0.0;
  Waveform gradient;
};

/// sum_m ||S_m(target) - S_m(estimate)||^2 and its exact gradient with
/// respect to `estimate`. Channels are summed.
inline LossAndGradient spectral_recon_loss(const Waveform& target, const Waveform& estimate,
                                           const SpectrogramConfig& cfg) {
  target.require_same_shape(estimate);
  const auto st = multiscale_spectrogram(target, cfg);
  auto diff = multiscale_spectrogram(estimate, cfg);
  diff.axpy(-1.0, st);
  LossAndGradient out;
  out.loss = diff.squared_norm();
  for (auto& g : diff.scales)
    for (auto& v : g.values) v *= 2.0;
  out.gradient = multiscale_vjp(estimate, diff, cfg);
  return out;
}

}  // namespace audiosds
