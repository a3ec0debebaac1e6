#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "audiosds/error.hpp"

namespace audiosds {

enum class OptimizerKind { adam, sgd };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

inline OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const OptimizerConfig&) const = default;
};

/// Descent on a flat parameter vector: params -= step(grad).
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {
    if (!(cfg_.lr > 0.0)) throw ConfigError("learning rate must be positive");
  }

  void step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw InvalidInput("optimizer state does not match parameter size");
    ++t_;
    if (cfg_.kind == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg_.lr * grad[i];
      return;
    }
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      params[i] -= cfg_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
    }
  }

  const OptimizerConfig& config() const { return cfg_; }
  std::size_t steps() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace audiosds
