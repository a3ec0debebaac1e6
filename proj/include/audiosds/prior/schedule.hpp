#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "audiosds/error.hpp"

namespace audiosds {

/// Signal and noise scales alpha(t), sigma(t) for t in [0, 1]. Either the
/// variance-preserving cosine schedule or a sampled table (as reported by a
/// remote model), linearly interpolated.
class NoiseSchedule {
 public:
  struct Point {
    double t, alpha, sigma;
  };

  static NoiseSchedule cosine() { return NoiseSchedule(); }

  static NoiseSchedule from_table(std::vector<Point> table) {
    if (table.size() < 2) throw InvalidInput("schedule table needs at least two points");
    std::sort(table.begin(), table.end(), [](const Point& a, const Point& b) { return a.t < b.t; });
    for (std::size_t i = 0; i < table.size(); ++i) {
      const auto& p = table[i];
      if (!std::isfinite(p.t) || !std::isfinite(p.alpha) || !std::isfinite(p.sigma) || p.alpha < 0 || p.sigma < 0)
        throw InvalidInput("schedule table has invalid entries");
      if (i && !(p.t > table[i - 1].t)) throw InvalidInput("schedule table times must be distinct");
    }
    NoiseSchedule s;
    s.table_ = std::move(table);
    return s;
  }

  bool is_table() const { return !table_.empty(); }
  const std::vector<Point>& table() const { return table_; }

  double alpha(double t) const { return eval(t).alpha; }
  double sigma(double t) const { return eval(t).sigma; }

  Point eval(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidInput("diffusion time must lie in [0, 1]");
    if (table_.empty()) {
      if (t == 1.0) return {1.0, 0.0, 1.0};
      const double a = 0.5 * std::numbers::pi * t;
      return {t, std::cos(a), std::sin(a)};
    }
    if (t <= table_.front().t) return {t, table_.front().alpha, table_.front().sigma};
    if (t >= table_.back().t) return {t, table_.back().alpha, table_.back().sigma};
    auto hi = std::upper_bound(table_.begin(), table_.end(), t, [](double v, const Point& p) { return v < p.t; });
    auto lo = hi - 1;
    const double u = (t - lo->t) / (hi->t - lo->t);
    return {t, lo->alpha + u * (hi->alpha - lo->alpha), lo->sigma + u * (hi->sigma - lo->sigma)};
  }

  /// `points` samples on a uniform grid, e.g. for the wire handshake.
  std::vector<Point> sample(std::size_t points) const {
    std::vector<Point> out;
    for (std::size_t i = 0; i < points; ++i) out.push_back(eval(static_cast<double>(i) / static_cast<double>(points - 1)));
    return out;
  }

 private:
  std::vector<Point> table_;
};

}  // namespace audiosds
