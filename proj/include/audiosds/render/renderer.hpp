#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "audiosds/error.hpp"
#include "audiosds/signal/waveform.hpp"

namespace audiosds {

/// Clip length and rate for synthesis renderers.
struct RenderSpec {
  double duration = 3.0;
  int sample_rate = kDefaultSampleRate;

  std::size_t frames() const {
    validate();
    return static_cast<std::size_t>(std::llround(duration * sample_rate));
  }

  void validate() const {
    if (!(duration > 0.0) || sample_rate <= 0) throw InvalidInput("render spec needs positive duration and rate");
    const double t = duration * sample_rate;
    if (std::abs(t - std::round(t)) > 1e-6)
      throw InvalidInput("duration * sample_rate must be an integer sample count");
  }
};

/// A differentiable map from a flat parameter vector to a stereo waveform.
/// `vjp` returns the parameter-space pullback of a waveform cotangent.
template <class R>
concept DifferentiableRenderer = requires(const R& r, std::span<const double> theta, const Waveform& cot) {
  { r.num_params() } -> std::convertible_to<std::size_t>;
  { r.render(theta) } -> std::same_as<Waveform>;
  { r.vjp(theta, cot) } -> std::same_as<std::vector<double>>;
};

/// g(theta) = theta, with theta the channel-major 2 x T sample block.
class IdentityRenderer {
 public:
  IdentityRenderer(std::size_t frames, int sample_rate) : frames_(frames), sample_rate_(sample_rate) {}

  std::size_t num_params() const { return 2 * frames_; }
  int sample_rate() const { return sample_rate_; }

  Waveform render(std::span<const double> theta) const {
    check(theta);
    return Waveform::from_flat(theta, sample_rate_);
  }

  std::vector<double> vjp(std::span<const double> theta, const Waveform& cot) const {
    check(theta);
    if (cot.frames() != frames_) throw InvalidInput("cotangent length mismatch");
    return {cot.flat().begin(), cot.flat().end()};
  }

 private:
  void check(std::span<const double> theta) const {
    if (theta.size() != num_params()) throw InvalidInput("identity renderer parameter size mismatch");
  }

  std::size_t frames_;
  int sample_rate_;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace audiosds
