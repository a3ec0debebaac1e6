#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "audiosds/error.hpp"
#include "audiosds/random.hpp"
#include "audiosds/render/renderer.hpp"

// Phase-modulation synthesizer with V operators and per-operator
// attack/decay envelopes.
//
//   u_v[n] = sin(t_n * w_v + <A_v, u[n-1]>) * f_v(t_n),   u[-1] = 0
//   x[n]   = <A_out, u[n-1]>
//
// t_n = n / sample_rate in seconds, w_v in rad/s, A = exp(log_fm_matrix).

namespace audiosds {

struct EnvelopeValue {
  double value = 0.0;
  double d_attack = 0.0;
  double d_decay = 0.0;
};

/// f(t) = max(0, min(t / (a + 1e-5), exp(a - t) / d^2) * (d - t - a) / d),
/// with partial derivatives in a (attack) and d (decay).
inline EnvelopeValue envelope_with_grad(double t, double attack, double decay) {
  constexpr double kEps = 1e-5;
  const double ramp = t / (attack + kEps);
  const double tail = std::exp(attack - t) / (decay * decay);
  const double shape = (decay - t - attack) / decay;
  const bool on_ramp = ramp <= tail;
  const double m = on_ramp ? ramp : tail;
  const double v = m * shape;
  if (!(v > 0.0)) return {};
  const double dm_da = on_ramp ? -t / ((attack + kEps) * (attack + kEps)) : tail;
  const double dm_dd = on_ramp ? 0.0 : -2.0 * tail / decay;
  const double ds_da = -1.0 / decay;
  const double ds_dd = (t + attack) / (decay * decay);
  return {v, dm_da * shape + m * ds_da, dm_dd * shape + m * ds_dd};
}

inline double envelope(double t, double attack, double decay) { return envelope_with_grad(t, attack, decay).value; }

/// Operator frequency range of the ratio mapping f = lo * (hi/lo)^sigmoid(r).
struct FmFrequencyRange {
  double min_hz = 20.0;
  double max_hz = 8000.0;
};

/// Raw (pre-mapping) FM parameters. The matrix has V+1 rows of length V:
/// rows 0..V-1 modulate the operators, row V mixes the output.
struct FMParams {
  std::size_t operators = 4;
  std::vector<double> log_fm_matrix;  // (V+1) x V, row-major
  std::vector<double> raw_ratios;
  std::vector<double> raw_attacks;
  std::vector<double> raw_decays;

  static FMParams zeros(std::size_t v) {
    if (v < 1) throw InvalidInput("FM synth needs at least one operator");
    FMParams p;
    p.operators = v;
    p.log_fm_matrix.assign((v + 1) * v, 0.0);
    p.raw_ratios.assign(v, 0.0);
    p.raw_attacks.assign(v, 0.0);
    p.raw_decays.assign(v, 0.0);
    return p;
  }

  static std::size_t packed_size(std::size_t v) { return (v + 1) * v + 3 * v; }

  std::vector<double> pack() const {
    std::vector<double> out;
    out.reserve(packed_size(operators));
    out.insert(out.end(), log_fm_matrix.begin(), log_fm_matrix.end());
    out.insert(out.end(), raw_ratios.begin(), raw_ratios.end());
    out.insert(out.end(), raw_attacks.begin(), raw_attacks.end());
    out.insert(out.end(), raw_decays.begin(), raw_decays.end());
    return out;
  }

  static FMParams unpack(std::span<const double> theta, std::size_t v) {
    if (theta.size() != packed_size(v)) throw InvalidInput("FM parameter vector has the wrong size");
    FMParams p = zeros(v);
    auto it = theta.begin();
    auto take = [&](std::vector<double>& dst) {
      std::copy_n(it, dst.size(), dst.begin());
      it += static_cast<std::ptrdiff_t>(dst.size());
    };
    take(p.log_fm_matrix);
    take(p.raw_ratios);
    take(p.raw_attacks);
    take(p.raw_decays);
    return p;
  }

  void validate() const {
    const std::size_t v = operators;
    if (v < 1 || log_fm_matrix.size() != (v + 1) * v || raw_ratios.size() != v || raw_attacks.size() != v ||
        raw_decays.size() != v)
      throw InvalidInput("FM parameter shapes are inconsistent");
    for (double x : pack())
      if (!std::isfinite(x)) throw InvalidInput("FM parameters must be finite");
  }

  double fm(std::size_t row, std::size_t col) const { return std::exp(log_fm_matrix[row * operators + col]); }
  double attack(std::size_t v) const { return sigmoid(raw_attacks[v]); }
  double decay(std::size_t v) const { return sigmoid(raw_decays[v]); }
  double frequency_hz(std::size_t v, const FmFrequencyRange& r = {}) const {
    return r.min_hz * std::pow(r.max_hz / r.min_hz, sigmoid(raw_ratios[v]));
  }
  double angular_frequency(std::size_t v, const FmFrequencyRange& r = {}) const {
    return 2.0 * std::numbers::pi * frequency_hz(v, r);
  }
};

/// Paper-style initialisation: output row close to [1, 0, ..., 0] after
/// exponentiation, weak modulation, short attack and long decay, all with a
/// small Gaussian perturbation.
inline FMParams fm_initial_params(std::size_t v, Rng& rng, double noise = 0.01) {
  FMParams p = FMParams::zeros(v);
  std::normal_distribution<double> n(0.0, noise);
  for (std::size_t r = 0; r < v; ++r)
    for (std::size_t c = 0; c < v; ++c) p.log_fm_matrix[r * v + c] = -3.0 + n(rng);
  for (std::size_t c = 0; c < v; ++c) p.log_fm_matrix[v * v + c] = (c == 0 ? 0.0 : -8.0) + n(rng);
  for (std::size_t c = 0; c < v; ++c) {
    p.raw_ratios[c] = -1.5 + 0.75 * static_cast<double>(c) + n(rng);
    p.raw_attacks[c] = logit(0.05) + n(rng);
    p.raw_decays[c] = logit(0.8) + n(rng);
  }
  return p;
}

namespace detail {

struct FmTrace {
  std::size_t frames = 0;
  std::vector<double> state;    // frames x V
  std::vector<double> phase;    // frames x V, sin argument
  std::vector<double> env;      // frames x V
  std::vector<double> env_da;   // frames x V
  std::vector<double> env_dd;   // frames x V
  std::vector<double> output;   // frames
};

inline FmTrace fm_forward(const FMParams& p, const RenderSpec& spec, const FmFrequencyRange& range) {
  p.validate();
  const std::size_t v = p.operators;
  const std::size_t t_len = spec.frames();
  const double sr = spec.sample_rate;
  std::vector<double> a((v + 1) * v), omega(v), att(v), dec(v);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::exp(p.log_fm_matrix[i]);
  for (std::size_t j = 0; j < v; ++j) {
    omega[j] = p.angular_frequency(j, range);
    att[j] = p.attack(j);
    dec[j] = p.decay(j);
  }
  for (double x : a)
    if (!std::isfinite(x)) throw NumericError("FM matrix overflowed after exponentiation");

  FmTrace tr;
  tr.frames = t_len;
  tr.state.assign(t_len * v, 0.0);
  tr.phase.assign(t_len * v, 0.0);
  tr.env.assign(t_len * v, 0.0);
  tr.env_da.assign(t_len * v, 0.0);
  tr.env_dd.assign(t_len * v, 0.0);
  tr.output.assign(t_len, 0.0);
  std::vector<double> prev(v, 0.0);
  for (std::size_t n = 0; n < t_len; ++n) {
    const double t = static_cast<double>(n) / sr;
    double out = 0.0;
    for (std::size_t j = 0; j < v; ++j) out += a[v * v + j] * prev[j];
    tr.output[n] = out;
    for (std::size_t k = 0; k < v; ++k) {
      double arg = t * omega[k];
      for (std::size_t j = 0; j < v; ++j) arg += a[k * v + j] * prev[j];
      const auto e = envelope_with_grad(t, att[k], dec[k]);
      const double u = std::sin(arg) * e.value;
      tr.phase[n * v + k] = arg;
      tr.env[n * v + k] = e.value;
      tr.env_da[n * v + k] = e.d_attack;
      tr.env_dd[n * v + k] = e.d_decay;
      tr.state[n * v + k] = u;
    }
    for (std::size_t k = 0; k < v; ++k) {
      const double u = tr.state[n * v + k];
      if (!std::isfinite(u) || !std::isfinite(out))
        throw NumericError("non-finite FM state at sample " + std::to_string(n));
      prev[k] = u;
    }
  }
  return tr;
}

}  // namespace detail

inline Waveform fm_render(const FMParams& p, const RenderSpec& spec, const FmFrequencyRange& range = {}) {
  const auto tr = detail::fm_forward(p, spec, range);
  return Waveform::from_mono(tr.output, spec.sample_rate);
}

/// Reverse sweep through the recurrence; the result is laid out like
/// FMParams and holds d<cotangent, x>/d(raw parameter).
inline FMParams fm_vjp(const FMParams& p, const RenderSpec& spec, const Waveform& cotangent,
                       const FmFrequencyRange& range = {}) {
  const auto tr = detail::fm_forward(p, spec, range);
  const std::size_t v = p.operators;
  const std::size_t t_len = tr.frames;
  if (cotangent.frames() != t_len) throw InvalidInput("FM cotangent length mismatch");
  const auto gy = cotangent.channel_sum();
  const double sr = spec.sample_rate;

  std::vector<double> a((v + 1) * v);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::exp(p.log_fm_matrix[i]);

  std::vector<double> ga((v + 1) * v, 0.0), gomega(v, 0.0), gatt(v, 0.0), gdec(v, 0.0);
  std::vector<double> gu_next(v, 0.0);  // adjoint flowing into u[n] from step n+1
  std::vector<double> gphase(v, 0.0);
  for (std::size_t n = t_len; n-- > 0;) {
    const double t = static_cast<double>(n) / sr;
    // u[n] feeds x[n+1] and the phases of step n+1 (already folded into gu_next).
    std::vector<double> gu = gu_next;
    if (n + 1 < t_len) {
      for (std::size_t j = 0; j < v; ++j) {
        gu[j] += gy[n + 1] * a[v * v + j];
        ga[v * v + j] += gy[n + 1] * tr.state[n * v + j];
      }
    }
    for (std::size_t k = 0; k < v; ++k) {
      const std::size_t idx = n * v + k;
      const double s = std::sin(tr.phase[idx]);
      const double c = std::cos(tr.phase[idx]);
      gphase[k] = gu[k] * c * tr.env[idx];
      const double genv = gu[k] * s;
      gatt[k] += genv * tr.env_da[idx];
      gdec[k] += genv * tr.env_dd[idx];
      gomega[k] += gphase[k] * t;
    }
    // Phase of step n depends on u[n-1].
    std::fill(gu_next.begin(), gu_next.end(), 0.0);
    if (n > 0) {
      for (std::size_t k = 0; k < v; ++k) {
        if (gphase[k] == 0.0) continue;
        for (std::size_t j = 0; j < v; ++j) {
          gu_next[j] += gphase[k] * a[k * v + j];
          ga[k * v + j] += gphase[k] * tr.state[(n - 1) * v + j];
        }
      }
    }
  }

  FMParams g = FMParams::zeros(v);
  for (std::size_t i = 0; i < ga.size(); ++i) g.log_fm_matrix[i] = ga[i] * a[i];
  const double log_span = std::log(range.max_hz / range.min_hz);
  for (std::size_t k = 0; k < v; ++k) {
    const double sr_k = sigmoid(p.raw_ratios[k]);
    g.raw_ratios[k] = gomega[k] * p.angular_frequency(k, range) * log_span * sr_k * (1.0 - sr_k);
    const double sa = sigmoid(p.raw_attacks[k]);
    const double sd = sigmoid(p.raw_decays[k]);
    g.raw_attacks[k] = gatt[k] * sa * (1.0 - sa);
    g.raw_decays[k] = gdec[k] * sd * (1.0 - sd);
  }
  return g;
}

/// FM synth as a DifferentiableRenderer over the packed raw parameters.
class FmRenderer {
 public:
  FmRenderer(std::size_t operators, RenderSpec spec, FmFrequencyRange range = {})
      : operators_(operators), spec_(spec), range_(range) {
    spec_.validate();
  }

  std::size_t num_params() const { return FMParams::packed_size(operators_); }
  std::size_t operators() const { return operators_; }
  const RenderSpec& spec() const { return spec_; }
  const FmFrequencyRange& range() const { return range_; }

  Waveform render(std::span<const double> theta) const {
    return fm_render(FMParams::unpack(theta, operators_), spec_, range_);
  }

  std::vector<double> vjp(std::span<const double> theta, const Waveform& cot) const {
    return fm_vjp(FMParams::unpack(theta, operators_), spec_, cot, range_).pack();
  }

 private:
  std::size_t operators_;
  RenderSpec spec_;
  FmFrequencyRange range_;
};

}  // namespace audiosds
