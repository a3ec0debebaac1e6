#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "audiosds/error.hpp"
#include "audiosds/prior/latent.hpp"
#include "audiosds/prior/schedule.hpp"
#include "audiosds/signal/waveform.hpp"

namespace audiosds {

struct PriorInfo {
  std::size_t latent_channels = 0;
  std::size_t compression_factor = 1;  // audio samples per latent frame
  int sample_rate = kDefaultSampleRate;
  bool operator==(const PriorInfo&) const = default;
};

/// eps_uncond + s * (eps_cond - eps_uncond); s = 1 + tau in the
/// (1 + tau) eps_cond - tau eps_uncond form.
inline Latent cfg_combine(const Latent& eps_cond, const Latent& eps_uncond, double guidance_scale) {
  eps_cond.require_same_shape(eps_uncond, "guidance inputs differ in shape");
  if (!(guidance_scale >= 0.0)) throw InvalidInput("guidance scale must be nonnegative");
  if (eps_cond == eps_uncond) return eps_cond;  // exact for any s, not just up to rounding
  return lincomb(guidance_scale, eps_cond, 1.0 - guidance_scale, eps_uncond);
}

/// Smallest alpha used when dividing by the signal scale in x0 estimates.
inline constexpr double kMinAlpha = 1e-4;

enum class TimeGrid { uniform };

/// Frozen latent diffusion model. Methods are non-const because remote
/// backends hold connection state.
class DiffusionPrior {
 public:
  virtual ~DiffusionPrior() = default;

  virtual PriorInfo info() = 0;
  virtual const NoiseSchedule& schedule() = 0;
  virtual std::string name() const = 0;

  virtual Latent encode(const Waveform& x) = 0;
  virtual Waveform decode(const Latent& h) = 0;

  virtual bool has_decoder_vjp() const { return false; }
  virtual Latent decode_vjp(const Latent& /*h*/, const Waveform& /*cotangent*/) {
    throw CapabilityError(name() + " backend has no decoder VJP");
  }
  virtual bool has_encoder_vjp() const { return false; }
  virtual Waveform encode_vjp(const Waveform& /*x*/, const Latent& /*cotangent*/) {
    throw CapabilityError(name() + " backend has no encoder VJP");
  }

  virtual Latent predict_noise(const Latent& z, double t, const Conditioning& cond) = 0;

  virtual Latent add_noise(const Latent& h, double t, const Latent& eps) {
    h.require_same_shape(eps, "noise shape differs from latent");
    const auto p = schedule().eval(t);
    return lincomb(p.alpha, h, p.sigma, eps);
  }

  /// CFG-combined prediction. A null condition or s = 1 needs one call.
  virtual Latent guided_noise(const Latent& z, double t, const Conditioning& cond, double guidance_scale) {
    if (cond.is_null()) return predict_noise(z, t, cond);
    auto eps_c = predict_noise(z, t, cond);
    if (guidance_scale == 1.0) return eps_c;
    auto eps_u = predict_noise(z, t, Conditioning::null());
    return cfg_combine(eps_c, eps_u, guidance_scale);
  }

  /// Deterministic DDIM chain t = t_0 > ... > t_n = 0 on a uniform grid:
  ///   x0 = (z_i - sigma_i eps) / alpha_i,  z_{i+1} = alpha_{i+1} x0 + sigma_{i+1} eps.
  virtual Latent denoise_multistep(const Latent& z, double t, const Conditioning& cond, int n_steps,
                                   double guidance_scale) {
    if (n_steps < 1) throw InvalidInput("denoising needs at least one step");
    if (!(t > 0.0 && t <= 1.0)) throw InvalidInput("denoising start time must lie in (0, 1]");
    const auto& sched = schedule();
    Latent cur = z;
    for (int i = 0; i < n_steps; ++i) {
      const double ti = t * (1.0 - static_cast<double>(i) / n_steps);
      const double tn = t * (1.0 - static_cast<double>(i + 1) / n_steps);
      const auto pi = sched.eval(ti);
      const auto pn = sched.eval(tn);
      const auto eps = guided_noise(cur, ti, cond, guidance_scale);
      const Latent x0 = (1.0 / std::max(pi.alpha, kMinAlpha)) * lincomb(1.0, cur, -pi.sigma, eps);
      cur = lincomb(pn.alpha, x0, pn.sigma, eps);
    }
    return cur;
  }
};

}  // namespace audiosds
