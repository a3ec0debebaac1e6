#pragma once

#include <optional>
#include <string>

#include "audiosds/prior/prior.hpp"

// Test doubles with identity codecs: the latent is the 2 x T sample block.

namespace audiosds {

inline Latent identity_encode(const Waveform& x) {
  return Latent(Waveform::kChannels, x.frames(), std::vector<double>(x.flat().begin(), x.flat().end()));
}

inline Waveform identity_decode(const Latent& h, int sample_rate) {
  if (h.channels != Waveform::kChannels) throw InvalidInput("identity codec expects a 2-channel latent");
  return Waveform::from_flat(h.values, sample_rate);
}

class IdentityCodecPrior : public DiffusionPrior {
 public:
  explicit IdentityCodecPrior(int sample_rate) : sample_rate_(sample_rate) {}

  PriorInfo info() override { return {Waveform::kChannels, 1, sample_rate_}; }
  const NoiseSchedule& schedule() override { return schedule_; }

  Latent encode(const Waveform& x) override {
    if (x.sample_rate() != sample_rate_) throw InvalidInput("waveform sample rate differs from the prior's");
    return identity_encode(x);
  }
  Waveform decode(const Latent& h) override { return identity_decode(h, sample_rate_); }

  bool has_decoder_vjp() const override { return true; }
  Latent decode_vjp(const Latent& h, const Waveform& cot) override {
    auto g = identity_encode(cot);
    g.require_same_shape(h, "decoder cotangent shape mismatch");
    return g;
  }
  bool has_encoder_vjp() const override { return true; }
  Waveform encode_vjp(const Waveform& x, const Latent& cot) override {
    auto g = identity_decode(cot, sample_rate_);
    g.require_same_shape(x);
    return g;
  }

 protected:
  int sample_rate_;
  NoiseSchedule schedule_ = NoiseSchedule::cosine();
};

/// Predicts the true noise. add_noise records (h, eps, z); a query at the
/// recorded z returns the recorded eps bit-exactly, any other z gets
/// (z - alpha h) / sigma, which is the exact noise for points on the
/// deterministic chain through h. With `exact_chain`, denoising from the
/// recorded z returns the recorded h itself instead of the DDIM result,
/// which matches it only up to rounding.
class OraclePrior : public IdentityCodecPrior {
 public:
  explicit OraclePrior(int sample_rate, bool exact_chain = false)
      : IdentityCodecPrior(sample_rate), exact_chain_(exact_chain) {}

  std::string name() const override { return "oracle"; }

  Latent add_noise(const Latent& h, double t, const Latent& eps) override {
    auto z = DiffusionPrior::add_noise(h, t, eps);
    clean_ = h;
    eps_ = eps;
    noised_ = z;
    return z;
  }

  Latent predict_noise(const Latent& z, double t, const Conditioning&) override {
    if (noised_ && z == *noised_) return *eps_;
    if (!clean_) throw InvalidInput("oracle prior has no recorded clean latent");
    const auto p = schedule_.eval(t);
    if (p.sigma == 0.0) return z.zeros_like();
    return (1.0 / p.sigma) * lincomb(1.0, z, -p.alpha, *clean_);
  }

  Latent denoise_multistep(const Latent& z, double t, const Conditioning& cond, int n_steps,
                           double guidance_scale) override {
    if (exact_chain_ && noised_ && z == *noised_) {
      if (n_steps < 1) throw InvalidInput("denoising needs at least one step");
      return *clean_;
    }
    return IdentityCodecPrior::denoise_multistep(z, t, cond, n_steps, guidance_scale);
  }

 private:
  bool exact_chain_ = false;
  std::optional<Latent> clean_, eps_, noised_;
};

/// Denoising ignores its input and returns a fixed target latent, so
/// decoder-style updates reduce to pulling the render towards the target.
class FrozenTargetPrior : public IdentityCodecPrior {
 public:
  explicit FrozenTargetPrior(const Waveform& target)
      : IdentityCodecPrior(target.sample_rate()), target_(identity_encode(target)) {}

  std::string name() const override { return "frozen-target"; }

  Latent predict_noise(const Latent& z, double t, const Conditioning&) override {
    const auto p = schedule_.eval(t);
    if (p.sigma == 0.0) return z.zeros_like();
    return (1.0 / p.sigma) * lincomb(1.0, z, -p.alpha, target_);
  }

  Latent denoise_multistep(const Latent& z, double, const Conditioning&, int n_steps, double) override {
    if (n_steps < 1) throw InvalidInput("denoising needs at least one step");
    target_.require_same_shape(z, "frozen target shape differs from latent");
    return target_;
  }

  const Latent& target() const { return target_; }

 private:
  Latent target_;
};

}  // namespace audiosds
