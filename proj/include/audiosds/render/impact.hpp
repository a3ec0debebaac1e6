#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "audiosds/error.hpp"
#include "audiosds/random.hpp"
#include "audiosds/render/renderer.hpp"
#include "audiosds/signal/fft.hpp"

// Modal impact model: a sum of damped cosines (object) convolved with a sum
// of decaying band-passed noise bands (reverb). The impact impulse is a delta.

namespace audiosds {

/// Gaussian FFT-domain gain at angular frequency `omega` for a band centred at
/// `center` with standard deviation rel_bandwidth * center.
inline double bandpass_gain(double omega, double center, double rel_bandwidth) {
  const double q = (omega - center) / (rel_bandwidth * center);
  return std::exp(-0.5 * q * q);
}

inline double bandpass_gain_dcenter(double omega, double center, double rel_bandwidth) {
  const double q = (omega - center) / (rel_bandwidth * center);
  return std::exp(-0.5 * q * q) * q * omega / (rel_bandwidth * center * center);
}

inline void check_band_center(double center, int sample_rate) {
  const double nyquist = std::numbers::pi * sample_rate;
  if (!(center > 0.0) || !(center < nyquist))
    throw InvalidInput("band centre must lie in (0, pi * sample_rate) rad/s");
}

/// Band-passes a signal through a Gaussian window over its length-T FFT bins.
/// Bin k sits at 2 pi k sr / T rad/s; the centre is continuous, so the filter
/// is smooth in `center`.
inline std::vector<double> bandpass(std::span<const double> noise, double center, double rel_bandwidth,
                                    int sample_rate) {
  check_band_center(center, sample_rate);
  if (!(rel_bandwidth > 0.0)) throw InvalidInput("relative bandwidth must be positive");
  const std::size_t n = noise.size();
  if (n == 0) return {};
  auto& fft = real_fft(n);
  auto spec = fft.forward(noise);
  const double bin_w = 2.0 * std::numbers::pi * sample_rate / static_cast<double>(n);
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= bandpass_gain(bin_w * static_cast<double>(k), center, rel_bandwidth);
  auto out = fft.inverse(spec);
  for (auto& v : out) v /= static_cast<double>(n);
  return out;
}

enum class ReverbExcitation { noise, impulse };

struct ImpactOptions {
  double rel_bandwidth = 0.05;
  ReverbExcitation excitation = ReverbExcitation::noise;
  // Skips the band filter so every reverb band is the raw excitation. With
  // impulse excitation this turns the reverb into a (decaying) delta.
  bool identity_filter = false;
};

/// Physical impact parameters; frequencies and band centres in rad/s,
/// dampings in 1/s.
struct ImpactParams {
  std::vector<double> amplitudes;
  std::vector<double> dampings;
  std::vector<double> frequencies;
  std::vector<double> reverb_amplitudes;
  std::vector<double> reverb_dampings;
  std::vector<double> reverb_centers;
  std::uint64_t noise_seed = 0;

  static ImpactParams zeros(std::size_t modes, std::uint64_t seed = 0) {
    ImpactParams p;
    p.amplitudes.assign(modes, 0.0);
    p.dampings.assign(modes, 0.0);
    p.frequencies.assign(modes, 0.0);
    p.reverb_amplitudes.assign(modes, 0.0);
    p.reverb_dampings.assign(modes, 0.0);
    p.reverb_centers.assign(modes, 0.0);
    p.noise_seed = seed;
    return p;
  }

  std::size_t modes() const { return amplitudes.size(); }

  void validate(int sample_rate, const ImpactOptions& opt) const {
    const std::size_t n = modes();
    if (n < 1) throw InvalidInput("impact model needs at least one mode");
    for (const auto* v : {&dampings, &frequencies, &reverb_amplitudes, &reverb_dampings, &reverb_centers})
      if (v->size() != n) throw InvalidInput("impact parameter shapes are inconsistent");
    const double nyquist = std::numbers::pi * sample_rate;
    for (std::size_t i = 0; i < n; ++i) {
      for (double x : {amplitudes[i], dampings[i], frequencies[i], reverb_amplitudes[i], reverb_dampings[i],
                       reverb_centers[i]})
        if (!std::isfinite(x)) throw InvalidInput("impact parameters must be finite");
      if (dampings[i] < 0.0 || reverb_dampings[i] < 0.0) throw InvalidInput("dampings must be nonnegative");
      if (!(frequencies[i] > 0.0) || !(frequencies[i] < nyquist))
        throw InvalidInput("modal frequency outside (0, pi * sample_rate)");
      if (!opt.identity_filter) check_band_center(reverb_centers[i], sample_rate);
    }
  }
};

/// Fixed excitation W for a run, length T.
inline std::vector<double> reverb_excitation(std::size_t frames, std::uint64_t seed, ReverbExcitation kind) {
  if (kind == ReverbExcitation::impulse) {
    std::vector<double> d(frames, 0.0);
    if (frames) d[0] = 1.0;
    return d;
  }
  Rng rng(derive_seed(seed, 0x7265766562ULL));
  return gaussian_vector(rng, frames, 1.0);
}

namespace detail {

struct ImpactTrace {
  std::vector<double> object;
  std::vector<double> reverb;
  std::vector<std::vector<double>> bands;  // filtered excitation per mode
  std::vector<Complex> excitation_spectrum;
  std::vector<double> output;
};

inline double seconds(std::size_t n, int sr) { return static_cast<double>(n) / sr; }

inline ImpactTrace impact_forward(const ImpactParams& p, const RenderSpec& spec, const ImpactOptions& opt) {
  const int sr = spec.sample_rate;
  p.validate(sr, opt);
  const std::size_t t_len = spec.frames();
  const std::size_t modes = p.modes();
  ImpactTrace tr;
  tr.object.assign(t_len, 0.0);
  for (std::size_t m = 0; m < modes; ++m) {
    const double a = p.amplitudes[m], d = p.dampings[m], lam = p.frequencies[m];
    if (a == 0.0) continue;
    for (std::size_t n = 0; n < t_len; ++n) {
      const double t = seconds(n, sr);
      tr.object[n] += a * std::exp(-d * t) * std::cos(lam * t);
    }
  }

  const auto w = reverb_excitation(t_len, p.noise_seed, opt.excitation);
  auto& fft = real_fft(t_len);
  tr.excitation_spectrum = fft.forward(w);
  tr.reverb.assign(t_len, 0.0);
  tr.bands.resize(modes);
  const double bin_w = 2.0 * std::numbers::pi * sr / static_cast<double>(t_len);
  std::vector<Complex> spec_buf(tr.excitation_spectrum.size());
  for (std::size_t m = 0; m < modes; ++m) {
    if (opt.identity_filter) {
      tr.bands[m] = w;
    } else {
      for (std::size_t k = 0; k < spec_buf.size(); ++k)
        spec_buf[k] = tr.excitation_spectrum[k] *
                      bandpass_gain(bin_w * static_cast<double>(k), p.reverb_centers[m], opt.rel_bandwidth);
      tr.bands[m] = fft.inverse(spec_buf);
      for (auto& v : tr.bands[m]) v /= static_cast<double>(t_len);
    }
    const double a = p.reverb_amplitudes[m], d = p.reverb_dampings[m];
    for (std::size_t n = 0; n < t_len; ++n) tr.reverb[n] += a * std::exp(-d * seconds(n, sr)) * tr.bands[m][n];
  }

  tr.output = fft_convolve(tr.object, tr.reverb, t_len);
  for (std::size_t n = 0; n < t_len; ++n)
    if (!std::isfinite(tr.output[n])) throw NumericError("non-finite impact output at sample " + std::to_string(n));
  return tr;
}

}  // namespace detail

inline Waveform impact_render(const ImpactParams& p, const RenderSpec& spec, const ImpactOptions& opt = {}) {
  auto tr = detail::impact_forward(p, spec, opt);
  return Waveform::from_mono(tr.output, spec.sample_rate);
}

/// Object and reverb impulses separately (for plotting).
inline std::pair<std::vector<double>, std::vector<double>> impact_impulses(const ImpactParams& p,
                                                                           const RenderSpec& spec,
                                                                           const ImpactOptions& opt = {}) {
  auto tr = detail::impact_forward(p, spec, opt);
  return {std::move(tr.object), std::move(tr.reverb)};
}

/// Gradient of <cotangent, render(p)> with respect to the physical
/// parameters; the excitation noise is held fixed.
inline ImpactParams impact_vjp(const ImpactParams& p, const RenderSpec& spec, const Waveform& cotangent,
                               const ImpactOptions& opt = {}) {
  const auto tr = detail::impact_forward(p, spec, opt);
  const std::size_t t_len = tr.output.size();
  if (cotangent.frames() != t_len) throw InvalidInput("impact cotangent length mismatch");
  const int sr = spec.sample_rate;
  const auto g = cotangent.channel_sum();
  const auto g_obj = fft_correlate(g, tr.reverb, t_len);
  const auto g_rev = fft_correlate(g, tr.object, t_len);

  ImpactParams out = ImpactParams::zeros(p.modes(), p.noise_seed);
  for (std::size_t m = 0; m < p.modes(); ++m) {
    const double a = p.amplitudes[m], d = p.dampings[m], lam = p.frequencies[m];
    double ga = 0.0, gd = 0.0, gl = 0.0;
    for (std::size_t n = 0; n < t_len; ++n) {
      const double t = detail::seconds(n, sr);
      const double e = std::exp(-d * t) * g_obj[n];
      const double c = std::cos(lam * t), s = std::sin(lam * t);
      ga += e * c;
      gd -= a * t * e * c;
      gl -= a * t * e * s;
    }
    out.amplitudes[m] = ga;
    out.dampings[m] = gd;
    out.frequencies[m] = gl;
  }

  auto& fft = real_fft(t_len);
  const double bin_w = 2.0 * std::numbers::pi * sr / static_cast<double>(t_len);
  std::vector<double> h(t_len);
  std::vector<Complex> dspec(tr.excitation_spectrum.size());
  for (std::size_t m = 0; m < p.modes(); ++m) {
    const double a = p.reverb_amplitudes[m], d = p.reverb_dampings[m];
    double ga = 0.0, gd = 0.0;
    for (std::size_t n = 0; n < t_len; ++n) {
      const double t = detail::seconds(n, sr);
      const double e = std::exp(-d * t);
      const double gb = g_rev[n] * e;
      ga += gb * tr.bands[m][n];
      gd -= a * t * gb * tr.bands[m][n];
      h[n] = a * gb;
    }
    out.reverb_amplitudes[m] = ga;
    out.reverb_dampings[m] = gd;
    if (opt.identity_filter) continue;
    for (std::size_t k = 0; k < dspec.size(); ++k)
      dspec[k] = tr.excitation_spectrum[k] *
                 bandpass_gain_dcenter(bin_w * static_cast<double>(k), p.reverb_centers[m], opt.rel_bandwidth);
    const auto db = fft.inverse(dspec);
    double gc = 0.0;
    for (std::size_t n = 0; n < t_len; ++n) gc += h[n] * db[n];
    out.reverb_centers[m] = gc / static_cast<double>(t_len);
  }
  return out;
}

enum class FrequencySpacing { linear, log };

/// Impact model as a DifferentiableRenderer over unconstrained parameters:
///   [a, rho, nu, a~, rho~, nu~], each of length N, with
///   d = exp(rho) and lambda = pi * sr * sigmoid(nu) (same maps for reverb).
class ImpactRenderer {
 public:
  ImpactRenderer(std::size_t modes, RenderSpec spec, std::uint64_t noise_seed, ImpactOptions opt = {})
      : modes_(modes), spec_(spec), noise_seed_(noise_seed), opt_(opt) {
    spec_.validate();
    if (modes_ < 1) throw InvalidInput("impact model needs at least one mode");
  }

  std::size_t num_params() const { return 6 * modes_; }
  std::size_t modes() const { return modes_; }
  const RenderSpec& spec() const { return spec_; }
  const ImpactOptions& options() const { return opt_; }
  std::uint64_t noise_seed() const { return noise_seed_; }

  ImpactParams physical(std::span<const double> theta) const {
    if (theta.size() != num_params()) throw InvalidInput("impact parameter vector has the wrong size");
    const std::size_t n = modes_;
    const double nyq = std::numbers::pi * spec_.sample_rate;
    ImpactParams p = ImpactParams::zeros(n, noise_seed_);
    for (std::size_t i = 0; i < n; ++i) {
      p.amplitudes[i] = theta[i];
      p.dampings[i] = std::exp(theta[n + i]);
      p.frequencies[i] = nyq * sigmoid(theta[2 * n + i]);
      p.reverb_amplitudes[i] = theta[3 * n + i];
      p.reverb_dampings[i] = std::exp(theta[4 * n + i]);
      p.reverb_centers[i] = nyq * sigmoid(theta[5 * n + i]);
    }
    return p;
  }

  Waveform render(std::span<const double> theta) const { return impact_render(physical(theta), spec_, opt_); }

  std::vector<double> vjp(std::span<const double> theta, const Waveform& cot) const {
    const auto p = physical(theta);
    const auto g = impact_vjp(p, spec_, cot, opt_);
    const std::size_t n = modes_;
    const double nyq = std::numbers::pi * spec_.sample_rate;
    std::vector<double> out(num_params());
    for (std::size_t i = 0; i < n; ++i) {
      const double s = sigmoid(theta[2 * n + i]);
      const double sr = sigmoid(theta[5 * n + i]);
      out[i] = g.amplitudes[i];
      out[n + i] = g.dampings[i] * p.dampings[i];
      out[2 * n + i] = g.frequencies[i] * nyq * s * (1.0 - s);
      out[3 * n + i] = g.reverb_amplitudes[i];
      out[4 * n + i] = g.reverb_dampings[i] * p.reverb_dampings[i];
      out[5 * n + i] = g.reverb_centers[i] * nyq * sr * (1.0 - sr);
    }
    return out;
  }

  /// Frequencies and band centres spaced over [lo_hz, hi_hz] (clamped below
  /// 0.95 * Nyquist) with N(0, freq_noise) added to the raw values; random
  /// amplitudes and dampings.
  std::vector<double> initial_params(Rng& rng, FrequencySpacing spacing = FrequencySpacing::linear,
                                     double lo_hz = 100.0, double hi_hz = 18000.0, double freq_noise = 1e-4) const {
    const std::size_t n = modes_;
    const double nyq_hz = 0.5 * spec_.sample_rate;
    hi_hz = std::min(hi_hz, 0.95 * nyq_hz);
    lo_hz = std::min(lo_hz, 0.5 * hi_hz);
    std::normal_distribution<double> fn(0.0, freq_noise);
    std::normal_distribution<double> unit(0.0, 1.0);
    const double amp = 1.0 / std::sqrt(static_cast<double>(n));
    std::vector<double> theta(num_params());
    for (std::size_t i = 0; i < n; ++i) {
      const double u = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
      const double hz = spacing == FrequencySpacing::linear ? lo_hz + u * (hi_hz - lo_hz)
                                                            : lo_hz * std::pow(hi_hz / lo_hz, u);
      const double raw_f = logit(hz / nyq_hz);
      theta[i] = amp * unit(rng);
      theta[n + i] = std::log(uniform(rng, 2.0, 20.0));
      theta[2 * n + i] = raw_f + fn(rng);
      theta[3 * n + i] = amp * unit(rng);
      theta[4 * n + i] = std::log(uniform(rng, 5.0, 30.0));
      theta[5 * n + i] = raw_f + fn(rng);
    }
    return theta;
  }

 private:
  std::size_t modes_;
  RenderSpec spec_;
  std::uint64_t noise_seed_;
  ImpactOptions opt_;
};

}  // namespace audiosds
