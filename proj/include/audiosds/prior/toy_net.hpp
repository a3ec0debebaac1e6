#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "audiosds/error.hpp"
#include "audiosds/prior/latent.hpp"
#include "audiosds/random.hpp"

// Small conditional noise predictor over latents:
//
//   a   = conv1(z)                                  C -> H, kernel K1
//   y   = tanh(a * (1 + G phi) + B phi)             FiLM by time and class
//   eps = conv2(y) + (S phi) * z                    H -> C, kernel K2, gated skip
//
// phi is a one-hot class block (the last block means unconditional) filled
// with Fourier features of t.

namespace audiosds {

struct DenoiserShape {
  std::size_t channels = 8;
  std::size_t hidden = 48;
  std::size_t kernel1 = 9;
  std::size_t kernel2 = 9;
  std::size_t classes = 2;  // excluding the unconditional slot

  static constexpr std::size_t kTimeFeatures = 5;
  std::size_t cond_dim() const { return kTimeFeatures * (classes + 1); }
  bool operator==(const DenoiserShape&) const = default;
};

inline std::array<double, DenoiserShape::kTimeFeatures> time_features(double t) {
  const double p = std::numbers::pi * t;
  return {1.0, std::cos(p), std::sin(p), std::cos(2 * p), std::sin(2 * p)};
}

class ConvDenoiser {
 public:
  using Mat = Eigen::MatrixXd;
  using Vec = Eigen::VectorXd;

  ConvDenoiser() = default;
  explicit ConvDenoiser(DenoiserShape s) : shape_(s) {
    if (s.channels == 0 || s.hidden == 0 || s.kernel1 % 2 == 0 || s.kernel2 % 2 == 0)
      throw InvalidInput("denoiser needs nonzero widths and odd kernels");
    params_.assign(param_count(), 0.0);
  }

  const DenoiserShape& shape() const { return shape_; }
  std::size_t param_count() const {
    const auto& s = shape_;
    return s.hidden * s.channels * s.kernel1 + s.hidden + 2 * s.hidden * s.cond_dim() +
           s.channels * s.hidden * s.kernel2 + s.channels + s.channels * s.cond_dim();
  }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  void init_random(Rng& rng) {
    const auto& s = shape_;
    std::fill(params_.begin(), params_.end(), 0.0);
    auto w1 = block(Part::w1);
    std::normal_distribution<double> n1(0.0, 1.0 / std::sqrt(double(s.channels * s.kernel1)));
    for (auto& v : w1) v = n1(rng);
    auto w2 = block(Part::w2);
    std::normal_distribution<double> n2(0.0, 0.1 / std::sqrt(double(s.hidden * s.kernel2)));
    for (auto& v : w2) v = n2(rng);
  }

  /// Index of the conditioning block for a class id; -1 means unconditional.
  std::size_t cond_slot(int class_id) const {
    if (class_id < 0) return shape_.classes;
    if (static_cast<std::size_t>(class_id) >= shape_.classes) throw InvalidInput("class id outside the vocabulary");
    return static_cast<std::size_t>(class_id);
  }

  Vec conditioning(double t, int class_id) const {
    Vec phi = Vec::Zero(static_cast<Eigen::Index>(shape_.cond_dim()));
    const auto f = time_features(t);
    const std::size_t base = cond_slot(class_id) * DenoiserShape::kTimeFeatures;
    for (std::size_t i = 0; i < f.size(); ++i) phi(static_cast<Eigen::Index>(base + i)) = f[i];
    return phi;
  }

  Latent predict(const Latent& z, double t, int class_id) const {
    if (z.channels != shape_.channels) throw InvalidInput("latent channel count differs from the denoiser's");
    Cache c;
    forward(z, conditioning(t, class_id), c);
    Latent out(z.channels, z.frames);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        out.values.data(), static_cast<Eigen::Index>(z.channels), static_cast<Eigen::Index>(z.frames)) = c.out;
    return out;
  }

  struct Example {
    const Latent* z;
    const Latent* eps;
    double t;
    int class_id;
  };

  /// Mean squared error over all elements of the batch and its gradient
  /// with respect to params().
  double loss_and_grad(std::span<const Example> batch, std::vector<double>& grad) const {
    grad.assign(params_.size(), 0.0);
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& ex : batch) count += ex.z->size();
    const double norm = 1.0 / static_cast<double>(count);
    for (const auto& ex : batch) {
      Cache c;
      const Vec phi = conditioning(ex.t, ex.class_id);
      forward(*ex.z, phi, c);
      const Mat target = as_matrix(*ex.eps);
      const Mat diff = c.out - target;
      total += diff.squaredNorm();
      backward(*ex.z, phi, c, 2.0 * norm * diff, grad);
    }
    return total * norm;
  }

  double mse(const Latent& z, const Latent& eps, double t, int class_id) const {
    const auto p = predict(z, t, class_id);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p.values[i] - eps.values[i]) * (p.values[i] - eps.values[i]);
    return s / static_cast<double>(p.size());
  }

  nlohmann::json to_json() const {
    const auto& s = shape_;
    return {{"channels", s.channels}, {"hidden", s.hidden},   {"kernel1", s.kernel1},
            {"kernel2", s.kernel2},   {"classes", s.classes}, {"params", params_}};
  }

  static ConvDenoiser from_json(const nlohmann::json& j) {
    DenoiserShape s{j.at("channels").get<std::size_t>(), j.at("hidden").get<std::size_t>(),
                    j.at("kernel1").get<std::size_t>(), j.at("kernel2").get<std::size_t>(),
                    j.at("classes").get<std::size_t>()};
    ConvDenoiser d(s);
    auto p = j.at("params").get<std::vector<double>>();
    if (p.size() != d.param_count()) throw FormatError("denoiser parameter count mismatch", 0);
    d.params_ = std::move(p);
    return d;
  }

 private:
  enum class Part { w1, b1, film_gain, film_bias, w2, b2, skip };

  struct Cache {
    Mat zcol, a, act, ycol, out;
    Vec gain, bias, skip;
  };

  std::size_t offset(Part p) const {
    const auto& s = shape_;
    const std::size_t sizes[] = {s.hidden * s.channels * s.kernel1, s.hidden, s.hidden * s.cond_dim(),
                                 s.hidden * s.cond_dim(), s.channels * s.hidden * s.kernel2, s.channels,
                                 s.channels * s.cond_dim()};
    std::size_t o = 0;
    for (int i = 0; i < static_cast<int>(p); ++i) o += sizes[i];
    return o;
  }

  std::span<double> block(Part p) {
    const std::size_t next = p == Part::skip ? params_.size() : offset(static_cast<Part>(static_cast<int>(p) + 1));
    return std::span<double>(params_).subspan(offset(p), next - offset(p));
  }

  // Row-major parameter blocks viewed as Eigen matrices.
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> view(Part p, std::size_t rows, std::size_t cols) const {
    return {params_.data() + offset(p), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
  }
  static Eigen::Map<RowMat> view(std::vector<double>& g, std::size_t off, std::size_t rows, std::size_t cols) {
    return {g.data() + off, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
  }

  static Mat as_matrix(const Latent& z) {
    return Eigen::Map<const RowMat>(z.values.data(), static_cast<Eigen::Index>(z.channels),
                                    static_cast<Eigen::Index>(z.frames));
  }

  // Column l of the result holds x[c, l + k - K/2] at row c * K + k (zero outside).
  static Mat im2col(const Mat& x, std::size_t k) {
    const auto rows = x.rows(), len = x.cols();
    const auto kk = static_cast<Eigen::Index>(k), half = kk / 2;
    Mat out = Mat::Zero(rows * kk, len);
    for (Eigen::Index c = 0; c < rows; ++c)
      for (Eigen::Index j = 0; j < kk; ++j) {
        const Eigen::Index shift = j - half;
        const Eigen::Index lo = std::max<Eigen::Index>(0, -shift), hi = std::min(len, len - shift);
        if (hi > lo) out.row(c * kk + j).segment(lo, hi - lo) = x.row(c).segment(lo + shift, hi - lo);
      }
    return out;
  }

  static Mat col2im(const Mat& col, Eigen::Index rows, std::size_t k) {
    const auto len = col.cols();
    const auto kk = static_cast<Eigen::Index>(k), half = kk / 2;
    Mat out = Mat::Zero(rows, len);
    for (Eigen::Index c = 0; c < rows; ++c)
      for (Eigen::Index j = 0; j < kk; ++j) {
        const Eigen::Index shift = j - half;
        const Eigen::Index lo = std::max<Eigen::Index>(0, -shift), hi = std::min(len, len - shift);
        if (hi > lo) out.row(c).segment(lo + shift, hi - lo) += col.row(c * kk + j).segment(lo, hi - lo);
      }
    return out;
  }

  void forward(const Latent& zl, const Vec& phi, Cache& c) const {
    const auto& s = shape_;
    const Mat z = as_matrix(zl);
    c.zcol = im2col(z, s.kernel1);
    const auto w1 = view(Part::w1, s.hidden, s.channels * s.kernel1);
    const auto b1 = view(Part::b1, s.hidden, 1);
    c.a = w1 * c.zcol;
    c.a.colwise() += Vec(b1.col(0));
    c.gain = Vec::Ones(static_cast<Eigen::Index>(s.hidden)) + view(Part::film_gain, s.hidden, s.cond_dim()) * phi;
    c.bias = view(Part::film_bias, s.hidden, s.cond_dim()) * phi;
    c.act = ((c.a.array().colwise() * c.gain.array()).colwise() + c.bias.array()).tanh().matrix();
    c.ycol = im2col(c.act, s.kernel2);
    const auto w2 = view(Part::w2, s.channels, s.hidden * s.kernel2);
    const auto b2 = view(Part::b2, s.channels, 1);
    c.skip = view(Part::skip, s.channels, s.cond_dim()) * phi;
    c.out = w2 * c.ycol;
    c.out.colwise() += Vec(b2.col(0));
    c.out += (z.array().colwise() * c.skip.array()).matrix();
  }

  void backward(const Latent& zl, const Vec& phi, const Cache& c, const Mat& d_out, std::vector<double>& g) const {
    const auto& s = shape_;
    const Mat z = as_matrix(zl);
    const Vec dskip = (d_out.array() * z.array()).rowwise().sum().matrix();
    view(g, offset(Part::skip), s.channels, s.cond_dim()).noalias() += dskip * phi.transpose();
    view(g, offset(Part::w2), s.channels, s.hidden * s.kernel2).noalias() += d_out * c.ycol.transpose();
    view(g, offset(Part::b2), s.channels, 1) += d_out.rowwise().sum();
    const auto w2 = view(Part::w2, s.channels, s.hidden * s.kernel2);
    const Mat dycol = w2.transpose() * d_out;
    const Mat dy = col2im(dycol, static_cast<Eigen::Index>(s.hidden), s.kernel2);
    const Mat dpre = (dy.array() * (1.0 - c.act.array().square())).matrix();
    const Vec dgain = (dpre.array() * c.a.array()).rowwise().sum().matrix();
    const Vec dbias = dpre.rowwise().sum();
    view(g, offset(Part::film_gain), s.hidden, s.cond_dim()).noalias() += dgain * phi.transpose();
    view(g, offset(Part::film_bias), s.hidden, s.cond_dim()).noalias() += dbias * phi.transpose();
    const Mat da = (dpre.array().colwise() * c.gain.array()).matrix();
    view(g, offset(Part::w1), s.hidden, s.channels * s.kernel1).noalias() += da * c.zcol.transpose();
    view(g, offset(Part::b1), s.hidden, 1) += da.rowwise().sum();
  }

  DenoiserShape shape_;
  std::vector<double> params_;
};

}  // namespace audiosds
