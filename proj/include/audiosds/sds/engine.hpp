#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audiosds/error.hpp"
#include "audiosds/prior/prior.hpp"
#include "audiosds/random.hpp"
#include "audiosds/render/renderer.hpp"
#include "audiosds/signal/spectrogram.hpp"

// Score-distillation updates. Every variant returns a gradient for a
// minimizing optimizer: theta <- theta - lr * gradient moves the render
// towards what the prior denoises it to.

namespace audiosds {

enum class SdsVariant { classic, decoder, spec_decoder };
enum class WeightMode { constant, sigma_squared };

inline std::string to_string(SdsVariant v) {
  switch (v) {
    case SdsVariant::classic: return "classic";
    case SdsVariant::decoder: return "decoder";
    case SdsVariant::spec_decoder: return "spec_decoder";
  }
  return "?";
}

inline SdsVariant sds_variant_from_string(const std::string& s) {
  if (s == "classic") return SdsVariant::classic;
  if (s == "decoder") return SdsVariant::decoder;
  if (s == "spec_decoder") return SdsVariant::spec_decoder;
  throw ConfigError("unknown SDS variant '" + s + "'");
}

inline std::string to_string(WeightMode w) { return w == WeightMode::constant ? "constant" : "sigma_squared"; }

inline WeightMode weight_mode_from_string(const std::string& s) {
  if (s == "constant") return WeightMode::constant;
  if (s == "sigma_squared") return WeightMode::sigma_squared;
  throw ConfigError("unknown weight mode '" + s + "'");
}

struct SdsConfig {
  double t_min = 0.6;
  double t_max = 1.0;
  double guidance_scale = 15.0;
  std::size_t batch_size = 8;
  int n_denoise_steps = 3;
  WeightMode weight = WeightMode::constant;
  SdsVariant variant = SdsVariant::decoder;
  SpectrogramConfig spectrogram;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(t_min >= 0.0 && t_max <= 1.0 && t_min <= t_max)) throw ConfigError("need 0 <= t_min <= t_max <= 1");
    if (t_max == 0.0) throw ConfigError("t_max must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (n_denoise_steps < 1) throw ConfigError("denoising steps must be at least 1");
    if (!(guidance_scale >= 0.0)) throw ConfigError("guidance scale must be nonnegative");
    if (variant == SdsVariant::spec_decoder) spectrogram.validate();
  }
};

/// t ~ U[t_min, t_max]; a degenerate interval always returns t_min.
inline double sample_timestep(const SdsConfig& cfg, Rng& rng) {
  if (cfg.t_min == cfg.t_max) return cfg.t_min;
  return std::uniform_real_distribution<double>(cfg.t_min, cfg.t_max)(rng);
}

inline double sds_weight(const SdsConfig& cfg, const NoiseSchedule& sched, double t) {
  if (cfg.weight == WeightMode::constant) return 1.0;
  const double s = sched.sigma(t);
  return s * s;
}

/// Seed of batch element b at optimization step `step`.
inline std::uint64_t sample_seed(const SdsConfig& cfg, std::uint64_t step, std::size_t b) {
  return derive_seed(cfg.seed, step, b);
}

struct UpdateReport {
  std::vector<double> gradient;
  std::vector<double> timesteps;
  std::vector<double> residual_norms;
  double mean_residual_norm = 0.0;
  double gradient_norm = 0.0;
  std::optional<Waveform> snapshot;  // denoised audio of the first sample

  nlohmann::json diagnostics(std::uint64_t step, SdsVariant v) const {
    return {{"step", step},
            {"variant", to_string(v)},
            {"mean_residual", mean_residual_norm},
            {"t", timesteps},
            {"residual_norms", residual_norms},
            {"gradient_norm", gradient_norm}};
  }
};

/// Cotangent of one batch element in the space where it is pulled back:
/// waveform space for classic and decoder, spectrogram space for
/// spec_decoder. Weighted by omega(t) but not yet averaged.
struct SampleCotangent {
  double t = 0.0;
  double residual_norm = 0.0;
  std::optional<Waveform> wave;
  std::optional<SpectrogramStack> spec;
  std::optional<Waveform> denoised;
};

namespace detail {

inline double stack_norm(const SpectrogramStack& s) { return std::sqrt(s.squared_norm()); }

}  // namespace detail

/// One batch element of an update at render x (with h = enc(x) precomputed).
inline SampleCotangent sds_sample(const Waveform& x, const Latent& h, const SpectrogramStack* s_x, DiffusionPrior& prior,
                                  const Conditioning& cond, const SdsConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  SampleCotangent out;
  out.t = sample_timestep(cfg, rng);
  Latent eps(h.channels, h.frames, gaussian_vector(rng, h.size()));
  const auto& sched = prior.schedule();
  const double w = sds_weight(cfg, sched, out.t);
  const Latent z = prior.add_noise(h, out.t, eps);

  if (cfg.variant == SdsVariant::classic) {
    const Latent eps_hat = prior.guided_noise(z, out.t, cond, cfg.guidance_scale);
    Latent r = eps_hat - eps;
    out.residual_norm = std::sqrt(squared_norm(r.values));
    r *= w * sched.alpha(out.t);
    out.wave = prior.encode_vjp(x, r);
    return out;
  }

  const Latent h_hat = prior.denoise_multistep(z, out.t, cond, cfg.n_denoise_steps, cfg.guidance_scale);
  Waveform x_hat = prior.decode(h_hat);
  if (x_hat.frames() != x.frames()) {
    if (x_hat.frames() < x.frames()) throw InvalidInput("decoded audio is shorter than the render");
    x_hat = x_hat.slice(0, x.frames());
  }
  if (cfg.variant == SdsVariant::decoder) {
    Waveform r = x - x_hat;
    out.residual_norm = norm(r);
    r *= w;
    out.wave = std::move(r);
  } else {
    auto s_hat = multiscale_spectrogram(x_hat, cfg.spectrogram);
    SpectrogramStack r = *s_x;
    r.axpy(-1.0, s_hat);
    out.residual_norm = detail::stack_norm(r);
    if (w != 1.0) {
      SpectrogramStack scaled = r.zeros_like();
      scaled.axpy(w, r);
      r = std::move(scaled);
    }
    out.spec = std::move(r);
  }
  out.denoised = std::move(x_hat);
  return out;
}

/// Batch-mean waveform-space cotangent of an update at render x, plus
/// per-sample diagnostics in `report` (gradient left empty).
inline Waveform sds_waveform_cotangent(const Waveform& x, DiffusionPrior& prior, const Conditioning& cond,
                                       const SdsConfig& cfg, std::uint64_t step, UpdateReport& report) {
  cfg.validate();
  if (cfg.variant == SdsVariant::classic && !prior.has_encoder_vjp())
    throw CapabilityError("classic SDS needs an encoder VJP, which the " + prior.name() + " backend lacks");
  const Latent h = prior.encode(x);
  std::optional<SpectrogramStack> s_x;
  if (cfg.variant == SdsVariant::spec_decoder) s_x = multiscale_spectrogram(x, cfg.spectrogram);

  const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
  Waveform cot(x.frames(), x.sample_rate());
  std::optional<SpectrogramStack> spec_cot;
  if (s_x) spec_cot = s_x->zeros_like();
  report.timesteps.clear();
  report.residual_norms.clear();
  double residual_sum = 0.0;
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    auto s = sds_sample(x, h, s_x ? &*s_x : nullptr, prior, cond, cfg, sample_seed(cfg, step, b));
    report.timesteps.push_back(s.t);
    report.residual_norms.push_back(s.residual_norm);
    residual_sum += s.residual_norm;
    if (s.wave) {
      *s.wave *= inv_b;
      cot += *s.wave;
    }
    if (s.spec) spec_cot->axpy(inv_b, *s.spec);
    if (b == 0 && s.denoised) report.snapshot = std::move(s.denoised);
  }
  report.mean_residual_norm = residual_sum * inv_b;
  if (spec_cot) cot = multiscale_vjp(x, *spec_cot, cfg.spectrogram);
  if (!cot.all_finite()) throw NumericError("non-finite SDS cotangent at step " + std::to_string(step));
  return cot;
}

/// Full update for any differentiable renderer.
template <DifferentiableRenderer R>
UpdateReport sds_update(std::span<const double> theta, const R& renderer, DiffusionPrior& prior,
                        const Conditioning& cond, const SdsConfig& cfg, std::uint64_t step = 0) {
  UpdateReport report;
  const Waveform x = renderer.render(theta);
  const Waveform cot = sds_waveform_cotangent(x, prior, cond, cfg, step, report);
  report.gradient = renderer.vjp(theta, cot);
  report.gradient_norm = norm(std::span<const double>(report.gradient));
  return report;
}

/// Sources parametrized as latents and rendered through the prior's decoder.
class LatentSourceRenderer {
 public:
  LatentSourceRenderer(DiffusionPrior& prior, std::size_t channels, std::size_t frames)
      : prior_(&prior), channels_(channels), frames_(frames) {
    if (!prior.has_decoder_vjp())
      throw CapabilityError("latent sources need a decoder VJP, which the " + prior.name() + " backend lacks");
  }

  std::size_t num_params() const { return channels_ * frames_; }
  std::size_t channels() const { return channels_; }
  std::size_t frames() const { return frames_; }

  Latent latent(std::span<const double> theta) const {
    if (theta.size() != num_params()) throw InvalidInput("latent source parameter size mismatch");
    return Latent(channels_, frames_, std::vector<double>(theta.begin(), theta.end()));
  }

  Waveform render(std::span<const double> theta) const { return prior_->decode(latent(theta)); }

  std::vector<double> vjp(std::span<const double> theta, const Waveform& cot) const {
    return prior_->decode_vjp(latent(theta), cot).values;
  }

 private:
  DiffusionPrior* prior_;
  std::size_t channels_;
  std::size_t frames_;
};

}  // namespace audiosds
