#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "audiosds/error.hpp"
#include "audiosds/prior/latent.hpp"
#include "audiosds/signal/waveform.hpp"

// Linear block codec: each run of `stride` stereo samples is projected onto
// `channels` orthonormal basis vectors. Fitted by PCA, which is the optimal
// linear autoencoder for squared error. Identity mode passes samples through.

namespace audiosds {

class BlockCodec {
 public:
  static BlockCodec identity(int sample_rate) {
    BlockCodec c;
    c.identity_ = true;
    c.stride_ = 1;
    c.channels_ = Waveform::kChannels;
    c.sample_rate_ = sample_rate;
    return c;
  }

  /// basis: channels x (2 * stride), rows orthonormal.
  static BlockCodec linear(std::size_t stride, std::size_t channels, std::vector<double> basis, double scale,
                           int sample_rate) {
    if (stride == 0 || channels == 0 || basis.size() != channels * 2 * stride || !(scale > 0.0))
      throw InvalidInput("block codec shape is inconsistent");
    BlockCodec c;
    c.stride_ = stride;
    c.channels_ = channels;
    c.basis_ = std::move(basis);
    c.scale_ = scale;
    c.sample_rate_ = sample_rate;
    return c;
  }

  bool is_identity() const { return identity_; }
  std::size_t stride() const { return stride_; }
  std::size_t channels() const { return channels_; }
  double scale() const { return scale_; }
  int sample_rate() const { return sample_rate_; }
  const std::vector<double>& basis() const { return basis_; }

  std::size_t latent_frames(std::size_t samples) const { return (samples + stride_ - 1) / stride_; }

  /// Samples past the last whole block are zero-padded.
  Latent encode(const Waveform& x) const {
    if (x.sample_rate() != sample_rate_) throw InvalidInput("waveform sample rate differs from the codec's");
    if (identity_) return Latent(channels_, x.frames(), std::vector<double>(x.flat().begin(), x.flat().end()));
    const std::size_t f_count = latent_frames(x.frames());
    Latent h(channels_, f_count);
    const std::size_t block = 2 * stride_;
    std::vector<double> buf(block);
    for (std::size_t f = 0; f < f_count; ++f) {
      gather(x, f, buf);
      for (std::size_t c = 0; c < channels_; ++c) {
        const double* b = &basis_[c * block];
        double s = 0.0;
        for (std::size_t i = 0; i < block; ++i) s += b[i] * buf[i];
        h(c, f) = scale_ * s;
      }
    }
    return h;
  }

  /// Always returns frames * stride samples.
  Waveform decode(const Latent& h) const {
    check(h);
    if (identity_) return Waveform::from_flat(h.values, sample_rate_);
    Waveform x(h.frames * stride_, sample_rate_);
    const std::size_t block = 2 * stride_;
    std::vector<double> buf(block);
    for (std::size_t f = 0; f < h.frames; ++f) {
      std::fill(buf.begin(), buf.end(), 0.0);
      for (std::size_t c = 0; c < channels_; ++c) {
        const double v = h(c, f) / scale_;
        const double* b = &basis_[c * block];
        for (std::size_t i = 0; i < block; ++i) buf[i] += v * b[i];
      }
      scatter(buf, f, x);
    }
    return x;
  }

  Latent decode_vjp(const Latent& h, const Waveform& cot) const {
    check(h);
    if (cot.frames() != h.frames * stride_) throw InvalidInput("decoder cotangent length mismatch");
    if (identity_) return Latent(channels_, h.frames, std::vector<double>(cot.flat().begin(), cot.flat().end()));
    // Decoding is linear with matrix basis^T / scale; its adjoint is encoding
    // without the scale and with 1 / scale instead.
    Latent g = encode_unscaled(cot, h.frames);
    g *= 1.0 / scale_;
    return g;
  }

  Waveform encode_vjp(const Waveform& x, const Latent& cot) const {
    if (cot.channels != channels_ || cot.frames != latent_frames(x.frames()))
      throw InvalidInput("encoder cotangent shape mismatch");
    if (identity_) return Waveform::from_flat(cot.values, sample_rate_);
    Latent scaled = cot;
    scaled *= scale_ * scale_;
    auto full = decode(scaled);  // basis^T * cot * scale
    return full.slice(0, x.frames());
  }

  nlohmann::json to_json() const {
    return {{"identity", identity_}, {"stride", stride_},   {"channels", channels_},
            {"basis", basis_},       {"scale", scale_},     {"sample_rate", sample_rate_}};
  }

  static BlockCodec from_json(const nlohmann::json& j) {
    if (j.at("identity").get<bool>()) return identity(j.at("sample_rate").get<int>());
    return linear(j.at("stride").get<std::size_t>(), j.at("channels").get<std::size_t>(),
                  j.at("basis").get<std::vector<double>>(), j.at("scale").get<double>(), j.at("sample_rate").get<int>());
  }

 private:
  void check(const Latent& h) const {
    if (h.channels != channels_) throw InvalidInput("latent channel count differs from the codec's");
  }

  void gather(const Waveform& x, std::size_t f, std::vector<double>& buf) const {
    for (std::size_t ch = 0; ch < Waveform::kChannels; ++ch) {
      const auto src = x.channel(ch);
      for (std::size_t s = 0; s < stride_; ++s) {
        const std::size_t n = f * stride_ + s;
        buf[ch * stride_ + s] = n < src.size() ? src[n] : 0.0;
      }
    }
  }

  void scatter(const std::vector<double>& buf, std::size_t f, Waveform& x) const {
    for (std::size_t ch = 0; ch < Waveform::kChannels; ++ch) {
      auto dst = x.channel(ch);
      for (std::size_t s = 0; s < stride_; ++s) dst[f * stride_ + s] = buf[ch * stride_ + s];
    }
  }

  Latent encode_unscaled(const Waveform& x, std::size_t f_count) const {
    Latent h(channels_, f_count);
    const std::size_t block = 2 * stride_;
    std::vector<double> buf(block);
    for (std::size_t f = 0; f < f_count; ++f) {
      gather(x, f, buf);
      for (std::size_t c = 0; c < channels_; ++c) {
        const double* b = &basis_[c * block];
        double s = 0.0;
        for (std::size_t i = 0; i < block; ++i) s += b[i] * buf[i];
        h(c, f) = s;
      }
    }
    return h;
  }

  bool identity_ = false;
  std::size_t stride_ = 1;
  std::size_t channels_ = 0;
  std::vector<double> basis_;
  double scale_ = 1.0;
  int sample_rate_ = kDefaultSampleRate;
};

/// PCA over all stride-length blocks of the given items. The latent scale
/// makes encoded training data unit-RMS on average.
inline BlockCodec fit_block_codec(const std::vector<Waveform>& items, std::size_t stride, std::size_t channels) {
  if (items.empty()) throw InvalidInput("codec fitting needs data");
  const std::size_t block = 2 * stride;
  if (channels == 0 || channels > block) throw InvalidInput("codec channel count must lie in [1, 2 * stride]");
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(block), static_cast<Eigen::Index>(block));
  Eigen::VectorXd v(static_cast<Eigen::Index>(block));
  std::size_t count = 0;
  for (const auto& x : items) {
    for (std::size_t f = 0; f + 1 <= x.frames() / stride; ++f) {
      for (std::size_t ch = 0; ch < Waveform::kChannels; ++ch)
        for (std::size_t s = 0; s < stride; ++s) v(static_cast<Eigen::Index>(ch * stride + s)) = x(ch, f * stride + s);
      cov.noalias() += v * v.transpose();
      ++count;
    }
  }
  if (count == 0) throw InvalidInput("items are shorter than one codec block");
  cov /= static_cast<double>(count);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const auto& vals = eig.eigenvalues();  // ascending
  const auto& vecs = eig.eigenvectors();
  std::vector<double> basis(channels * block);
  double kept = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const auto col = static_cast<Eigen::Index>(block - 1 - c);
    kept += std::max(0.0, vals(col));
    // Deterministic sign: largest-magnitude entry positive.
    Eigen::Index arg = 0;
    vecs.col(col).cwiseAbs().maxCoeff(&arg);
    const double sign = vecs(arg, col) < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < block; ++i) basis[c * block + i] = sign * vecs(static_cast<Eigen::Index>(i), col);
  }
  const double per_channel = kept / static_cast<double>(channels);
  const double scale = per_channel > 0 ? 1.0 / std::sqrt(per_channel) : 1.0;
  return BlockCodec::linear(stride, channels, std::move(basis), scale, items.front().sample_rate());
}

}  // namespace audiosds
