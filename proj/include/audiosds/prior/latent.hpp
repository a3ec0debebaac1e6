#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "audiosds/error.hpp"

namespace audiosds {

/// Channels x frames tensor in diffusion space, channel-major.
struct Latent {
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::vector<double> values;

  Latent() = default;
  Latent(std::size_t c, std::size_t f, double fill = 0.0) : channels(c), frames(f), values(c * f, fill) {}
  Latent(std::size_t c, std::size_t f, std::vector<double> v) : channels(c), frames(f), values(std::move(v)) {
    if (values.size() != c * f) throw InvalidInput("latent data does not match its shape");
  }

  std::size_t size() const { return values.size(); }
  double& operator()(std::size_t c, std::size_t f) { return values[c * frames + f]; }
  double operator()(std::size_t c, std::size_t f) const { return values[c * frames + f]; }

  bool same_shape(const Latent& o) const { return channels == o.channels && frames == o.frames; }
  void require_same_shape(const Latent& o, const char* what = "latent shape mismatch") const {
    if (!same_shape(o)) throw InvalidInput(what);
  }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Latent zeros_like() const { return Latent(channels, frames); }

  Latent& operator+=(const Latent& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
    return *this;
  }
  Latent& operator-=(const Latent& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= o.values[i];
    return *this;
  }
  Latent& operator*=(double s) {
    for (auto& v : values) v *= s;
    return *this;
  }
  friend Latent operator+(Latent a, const Latent& b) { return a += b; }
  friend Latent operator-(Latent a, const Latent& b) { return a -= b; }
  friend Latent operator*(double s, Latent a) { return a *= s; }
  bool operator==(const Latent&) const = default;
};

/// a * x + b * y
inline Latent lincomb(double a, const Latent& x, double b, const Latent& y) {
  x.require_same_shape(y);
  Latent out = x.zeros_like();
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a * x.values[i] + b * y.values[i];
  return out;
}

/// Text prompt (bridge backend) or class id (toy backend); neither means
/// unconditional.
struct Conditioning {
  std::optional<std::string> prompt;
  std::optional<int> class_id;

  static Conditioning null() { return {}; }
  static Conditioning text(std::string p) { return {std::move(p), std::nullopt}; }
  static Conditioning label(int id) { return {std::nullopt, id}; }

  bool is_null() const { return !prompt && !class_id; }
  std::string describe() const {
    if (prompt) return "\"" + *prompt + "\"";
    if (class_id) return "class " + std::to_string(*class_id);
    return "unconditional";
  }
  bool operator==(const Conditioning&) const = default;
};

}  // namespace audiosds
