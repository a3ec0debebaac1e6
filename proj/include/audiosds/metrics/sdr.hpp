#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "audiosds/error.hpp"
#include "audiosds/signal/waveform.hpp"

namespace audiosds {

inline constexpr double kSdrCapDb = 100.0;

namespace detail {

inline double capped_ratio_db(double signal, double residual) {
  if (residual <= signal * std::pow(10.0, -kSdrCapDb / 10.0)) return kSdrCapDb;
  return std::min(kSdrCapDb, 10.0 * std::log10(signal / residual));
}

inline double si_sdr_channel(std::span<const double> r, std::span<const double> e) {
  double rr = 0.0, er = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    rr += r[i] * r[i];
    er += e[i] * r[i];
  }
  if (rr == 0.0) throw UndefinedMetric("SI-SDR is undefined for a silent reference");
  const double a = er / rr;
  double sig = 0.0, res = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double s = a * r[i];
    sig += s * s;
    res += (e[i] - s) * (e[i] - s);
  }
  if (sig == 0.0) return -kSdrCapDb;
  return detail::capped_ratio_db(sig, res);
}

inline double sdr_channel(std::span<const double> r, std::span<const double> e) {
  double rr = 0.0, res = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    rr += r[i] * r[i];
    res += (e[i] - r[i]) * (e[i] - r[i]);
  }
  if (rr == 0.0) throw UndefinedMetric("SDR is undefined for a silent reference");
  return detail::capped_ratio_db(rr, res);
}

}  // namespace detail

/// Scale-invariant SDR in dB, averaged over channels, capped at +100 dB.
inline double si_sdr(const Waveform& reference, const Waveform& estimate) {
  reference.require_same_shape(estimate);
  if (reference.empty()) throw InvalidInput("SI-SDR of empty waveforms");
  double s = 0.0;
  for (std::size_t c = 0; c < Waveform::kChannels; ++c) s += detail::si_sdr_channel(reference.channel(c), estimate.channel(c));
  return s / Waveform::kChannels;
}

/// Plain SDR: 10 log10(|r|^2 / |e - r|^2), averaged over channels.
inline double plain_sdr(const Waveform& reference, const Waveform& estimate) {
  reference.require_same_shape(estimate);
  if (reference.empty()) throw InvalidInput("SDR of empty waveforms");
  double s = 0.0;
  for (std::size_t c = 0; c < Waveform::kChannels; ++c) s += detail::sdr_channel(reference.channel(c), estimate.channel(c));
  return s / Waveform::kChannels;
}

enum class SdrKind { scale_invariant, plain };

inline double sdr(const Waveform& reference, const Waveform& estimate, SdrKind kind = SdrKind::scale_invariant) {
  return kind == SdrKind::scale_invariant ? si_sdr(reference, estimate) : plain_sdr(reference, estimate);
}

}  // namespace audiosds
