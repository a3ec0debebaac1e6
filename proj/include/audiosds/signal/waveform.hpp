#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "audiosds/error.hpp"

namespace audiosds {

inline constexpr int kDefaultSampleRate = 44100;

/// Stereo time-domain buffer. Samples are stored channel-major (left block,
/// then right block). Mono material is duplicated onto both channels.
class Waveform {
 public:
  static constexpr std::size_t kChannels = 2;

  Waveform() = default;

  Waveform(std::size_t frames, int sample_rate)
      : frames_(frames), sample_rate_(sample_rate), data_(kChannels * frames, 0.0) {
    if (sample_rate <= 0) throw InvalidInput("waveform sample rate must be positive");
  }

  static Waveform from_mono(std::span<const double> mono, int sample_rate) {
    Waveform w(mono.size(), sample_rate);
    std::copy(mono.begin(), mono.end(), w.channel(0).begin());
    std::copy(mono.begin(), mono.end(), w.channel(1).begin());
    return w;
  }

  static Waveform from_channels(std::span<const double> left, std::span<const double> right,
                                int sample_rate) {
    if (left.size() != right.size()) throw InvalidInput("channel lengths differ");
    Waveform w(left.size(), sample_rate);
    std::copy(left.begin(), left.end(), w.channel(0).begin());
    std::copy(right.begin(), right.end(), w.channel(1).begin());
    return w;
  }

  /// Interprets `flat` as a channel-major 2 x T block.
  static Waveform from_flat(std::span<const double> flat, int sample_rate) {
    if (flat.size() % kChannels != 0) throw InvalidInput("flat waveform size must be even");
    Waveform w(flat.size() / kChannels, sample_rate);
    std::copy(flat.begin(), flat.end(), w.data_.begin());
    return w;
  }

  std::size_t frames() const noexcept { return frames_; }
  int sample_rate() const noexcept { return sample_rate_; }
  bool empty() const noexcept { return frames_ == 0; }
  double duration() const noexcept { return static_cast<double>(frames_) / sample_rate_; }

  std::span<double> channel(std::size_t c) { return {data_.data() + c * frames_, frames_}; }
  std::span<const double> channel(std::size_t c) const { return {data_.data() + c * frames_, frames_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  double& operator()(std::size_t c, std::size_t n) { return data_[c * frames_ + n]; }
  double operator()(std::size_t c, std::size_t n) const { return data_[c * frames_ + n]; }

  /// Mean of the two channels.
  std::vector<double> mono_mix() const {
    std::vector<double> out(frames_);
    for (std::size_t n = 0; n < frames_; ++n) out[n] = 0.5 * ((*this)(0, n) + (*this)(1, n));
    return out;
  }

  /// Sum of the two channels; the adjoint of mono duplication.
  std::vector<double> channel_sum() const {
    std::vector<double> out(frames_);
    for (std::size_t n = 0; n < frames_; ++n) out[n] = (*this)(0, n) + (*this)(1, n);
    return out;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Waveform& operator+=(const Waveform& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Waveform& operator-=(const Waveform& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Waveform& operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
  }
  friend Waveform operator+(Waveform a, const Waveform& b) { return a += b; }
  friend Waveform operator-(Waveform a, const Waveform& b) { return a -= b; }
  friend Waveform operator*(Waveform a, double s) { return a *= s; }
  friend Waveform operator*(double s, Waveform a) { return a *= s; }

  bool operator==(const Waveform& o) const {
    return sample_rate_ == o.sample_rate_ && frames_ == o.frames_ && data_ == o.data_;
  }

  void require_same_shape(const Waveform& o) const {
    if (frames_ != o.frames_ || sample_rate_ != o.sample_rate_)
      throw InvalidInput("waveform shapes differ (" + std::to_string(frames_) + "@" +
                         std::to_string(sample_rate_) + " vs " + std::to_string(o.frames_) + "@" +
                         std::to_string(o.sample_rate_) + ")");
  }

  /// Samples [begin, begin + count) of both channels.
  Waveform slice(std::size_t begin, std::size_t count) const {
    if (begin + count > frames_) throw InvalidInput("waveform slice out of range");
    Waveform w(count, sample_rate_);
    for (std::size_t c = 0; c < kChannels; ++c)
      std::copy_n(channel(c).begin() + static_cast<std::ptrdiff_t>(begin), count, w.channel(c).begin());
    return w;
  }

 private:
  std::size_t frames_ = 0;
  int sample_rate_ = kDefaultSampleRate;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }
inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double dot(const Waveform& a, const Waveform& b) {
  a.require_same_shape(b);
  return dot(a.flat(), b.flat());
}
inline double squared_norm(const Waveform& a) { return squared_norm(a.flat()); }
inline double norm(const Waveform& a) { return norm(a.flat()); }

}  // namespace audiosds
