#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "audiosds/error.hpp"
#include "audiosds/optim.hpp"
#include "audiosds/render/renderer.hpp"
#include "audiosds/sds/engine.hpp"

namespace audiosds {

struct SynthesisConfig {
  SdsConfig sds;
  OptimizerConfig optimizer{OptimizerKind::adam, 1e-2};
  std::size_t steps = 1000;
  std::size_t log_every = 1;
};

struct SynthesisResult {
  std::vector<double> theta;
  std::vector<nlohmann::json> log;
};

/// Called after each logged update with the parameters the update was
/// computed at.
using SynthesisObserver = std::function<void(std::size_t step, std::span<const double> theta, const nlohmann::json&)>;

/// SDS optimization of one renderer against one prompt. A non-finite
/// parameter aborts with the last finite set.
template <DifferentiableRenderer R>
SynthesisResult optimize_synthesis(std::vector<double> theta, const R& renderer, DiffusionPrior& prior,
                                   const Conditioning& cond, const SynthesisConfig& cfg,
                                   const SynthesisObserver& observer = {}) {
  if (cfg.steps == 0 || cfg.log_every == 0) throw ConfigError("synthesis step counts must be positive");
  if (theta.size() != renderer.num_params()) throw InvalidInput("initial parameters do not match the renderer");
  cfg.sds.validate();
  Optimizer opt(cfg.optimizer, theta.size());
  SynthesisResult result;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    auto rep = sds_update(std::span<const double>(theta), renderer, prior, cond, cfg.sds, step);
    if (step % cfg.log_every == 0 || step + 1 == cfg.steps) {
      auto rec = rep.diagnostics(step, cfg.sds.variant);
      result.log.push_back(rec);
      if (observer) observer(step, theta, rec);
    }
    const auto last_good = theta;
    opt.step(theta, rep.gradient);
    for (double v : theta)
      if (!std::isfinite(v)) throw NumericAbort("non-finite renderer parameters", step, {last_good});
  }
  result.theta = std::move(theta);
  return result;
}

}  // namespace audiosds
