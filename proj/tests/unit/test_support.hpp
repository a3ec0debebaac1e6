#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "audiosds/prior/oracle.hpp"
#include "audiosds/prior/toy.hpp"
#include "audiosds/random.hpp"
#include "audiosds/signal/waveform.hpp"

namespace audiosds::testing {

inline Waveform random_waveform(std::size_t frames, int sample_rate, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  auto flat = gaussian_vector(rng, 2 * frames, scale);
  return Waveform::from_flat(flat, sample_rate);
}

/// Central finite differences of a scalar function at x.
inline std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double h = 1e-6) {
  std::vector<double> xp(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = xp[i];
    xp[i] = keep + h;
    const double fp = f(xp);
    xp[i] = keep - h;
    const double fm = f(xp);
    xp[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Fourth-order central differences; used where the function has large
/// curvature (phase terms) and the plain stencil's truncation error shows.
inline std::vector<double> fd_gradient5(const std::function<double(std::span<const double>)>& f,
                                        std::span<const double> x, double h = 1e-5) {
  std::vector<double> xp(x.begin(), x.end());
  std::vector<double> g(x.size());
  auto at = [&](std::size_t i, double offset) {
    const double keep = xp[i];
    xp[i] = keep + offset;
    const double v = f(xp);
    xp[i] = keep;
    return v;
  };
  for (std::size_t i = 0; i < x.size(); ++i)
    g[i] = (8.0 * (at(i, h) - at(i, -h)) - (at(i, 2 * h) - at(i, -2 * h))) / (12.0 * h);
  return g;
}

/// Worst per-coordinate relative error. Coordinates far below the largest
/// gradient entry are compared against a floor of 1e-3 * max|expected| so
/// that roundoff in near-zero entries does not dominate.
inline double max_relative_error(std::span<const double> actual, std::span<const double> expected) {
  double scale = 0.0;
  for (double v : expected) scale = std::max(scale, std::abs(v));
  const double floor = std::max(1e-3 * scale, 1e-300);
  double worst = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double denom = std::max({std::abs(actual[i]), std::abs(expected[i]), floor});
    worst = std::max(worst, std::abs(actual[i] - expected[i]) / denom);
  }
  return worst;
}

inline double relative_l2(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

/// Small toy prior trained once per test process.
inline const ToyPriorCheckpoint& tiny_toy_checkpoint() {
  static const ToyPriorCheckpoint ck = [] {
    ToyTrainingConfig cfg;
    cfg.steps = 300;
    cfg.items_per_class = 8;
    cfg.hidden = 24;
    cfg.log_every = 50;
    return train_toy_prior(traffic_sax_corpus(), cfg);
  }();
  return ck;
}

/// Identity codec; denoising returns the target of the conditioning class
/// (zeros for unconditional), so each prompt has one exact answer.
class ClassTargetPrior : public IdentityCodecPrior {
 public:
  explicit ClassTargetPrior(std::vector<Waveform> targets)
      : IdentityCodecPrior(targets.front().sample_rate()), targets_(std::move(targets)) {}

  std::string name() const override { return "class-target"; }

  Latent target(const Conditioning& c, const Latent& like) const {
    if (!c.class_id) return like.zeros_like();
    return identity_encode(targets_.at(static_cast<std::size_t>(*c.class_id)));
  }

  Latent predict_noise(const Latent& z, double t, const Conditioning& c) override {
    const auto p = schedule_.eval(t);
    if (p.sigma == 0.0) return z.zeros_like();
    return (1.0 / p.sigma) * lincomb(1.0, z, -p.alpha, target(c, z));
  }

  Latent denoise_multistep(const Latent& z, double, const Conditioning& c, int n_steps, double) override {
    if (n_steps < 1) throw InvalidInput("denoising needs at least one step");
    return target(c, z);
  }

 private:
  std::vector<Waveform> targets_;
};

}  // namespace audiosds::testing
