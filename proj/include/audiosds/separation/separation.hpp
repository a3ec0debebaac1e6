#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audiosds/error.hpp"
#include "audiosds/metrics/sdr.hpp"
#include "audiosds/optim.hpp"
#include "audiosds/prior/prior.hpp"
#include "audiosds/random.hpp"
#include "audiosds/render/renderer.hpp"
#include "audiosds/sds/engine.hpp"
#include "audiosds/signal/spectrogram.hpp"

// Prompt-guided source separation: K sources whose sum must reproduce the
// mixture's multiscale spectrogram, each pulled towards its prompt by
// spectrogram-decoder SDS.

namespace audiosds {

enum class SourceParametrization { latent, waveform };

inline std::string to_string(SourceParametrization p) { return p == SourceParametrization::latent ? "latent" : "waveform"; }

inline SourceParametrization parametrization_from_string(const std::string& s) {
  if (s == "latent") return SourceParametrization::latent;
  if (s == "waveform") return SourceParametrization::waveform;
  throw ConfigError("unknown source parametrization '" + s + "'");
}

struct SeparationSource {
  std::string label;
  Conditioning cond;
};

struct SeparationConfig {
  double gamma = 0.02;
  SourceParametrization parametrization = SourceParametrization::latent;
  SdsConfig sds;
  SpectrogramConfig recon;
  OptimizerConfig optimizer{OptimizerKind::adam, 5e-2};
  std::size_t steps = 1000;
  std::size_t log_every = 10;
  double init_noise = 0.01;
  std::uint64_t seed = 0;
};

struct SeparationProblem {
  Waveform mixture;
  std::vector<SeparationSource> sources;
  SeparationConfig cfg;

  std::size_t k() const { return sources.size(); }

  void validate() const {
    if (mixture.empty()) throw ConfigError("separation needs a non-empty mixture");
    if (sources.size() < 2) throw ConfigError("separation needs at least two sources");
    if (!(cfg.gamma > 0.0)) throw ConfigError("SDS weight gamma must be positive");
    if (cfg.steps == 0 || cfg.log_every == 0) throw ConfigError("separation step counts must be positive");
    cfg.recon.validate();
    SdsConfig s = cfg.sds;
    s.variant = SdsVariant::spec_decoder;
    s.validate();
  }
};

/// Every source set to m / K, so the estimates still sum to m.
inline std::vector<Waveform> baseline_assignment(const Waveform& m, std::size_t k) {
  if (k < 1) throw InvalidInput("baseline needs at least one source");
  return std::vector<Waveform>(k, m * (1.0 / static_cast<double>(k)));
}

/// A source as either a decoded latent or a raw sample block.
class SourceRenderer {
 public:
  SourceRenderer(LatentSourceRenderer r) : latent_(std::move(r)) {}
  SourceRenderer(IdentityRenderer r) : wave_(std::move(r)) {}

  std::size_t num_params() const { return latent_ ? latent_->num_params() : wave_->num_params(); }
  Waveform render(std::span<const double> theta) const { return latent_ ? latent_->render(theta) : wave_->render(theta); }
  std::vector<double> vjp(std::span<const double> theta, const Waveform& cot) const {
    return latent_ ? latent_->vjp(theta, cot) : wave_->vjp(theta, cot);
  }

 private:
  std::optional<LatentSourceRenderer> latent_;
  std::optional<IdentityRenderer> wave_;
};

struct ResidualResult {
  double loss = 0.0;
  std::vector<std::vector<double>> gradients;
  Waveform estimate;  // sum of the rendered sources
};

/// L_rec = sum_m |S_m(m) - S_m(sum_k g_k(theta_k))|^2 and its gradient per source.
inline ResidualResult mixture_residual(const Waveform& mixture, const std::vector<SourceRenderer>& renderers,
                                       const std::vector<std::vector<double>>& thetas, const SpectrogramConfig& cfg) {
  if (renderers.size() != thetas.size()) throw InvalidInput("one parameter vector per source expected");
  ResidualResult out;
  out.estimate = Waveform(mixture.frames(), mixture.sample_rate());
  for (std::size_t k = 0; k < renderers.size(); ++k) out.estimate += renderers[k].render(thetas[k]);
  auto lg = spectral_recon_loss(mixture, out.estimate, cfg);
  out.loss = lg.loss;
  for (std::size_t k = 0; k < renderers.size(); ++k) out.gradients.push_back(renderers[k].vjp(thetas[k], lg.gradient));
  return out;
}

struct SeparationStep {
  double recon_loss = 0.0;
  Waveform estimate;
  std::vector<std::vector<double>> gradients;
  std::vector<UpdateReport> sds;
};

/// grad_k = dL_rec/dtheta_k + gamma * spec-decoder SDS gradient of source k.
/// Every source uses the same per-sample seeds at a given step, so permuting
/// (source, prompt) pairs permutes the gradients.
inline SeparationStep separation_update(const SeparationProblem& problem, const std::vector<SourceRenderer>& renderers,
                                        const std::vector<std::vector<double>>& thetas, DiffusionPrior& prior,
                                        std::uint64_t step) {
  auto res = mixture_residual(problem.mixture, renderers, thetas, problem.cfg.recon);
  SeparationStep out;
  out.recon_loss = res.loss;
  out.estimate = std::move(res.estimate);
  out.gradients = std::move(res.gradients);
  SdsConfig sds = problem.cfg.sds;
  sds.variant = SdsVariant::spec_decoder;
  for (std::size_t k = 0; k < renderers.size(); ++k) {
    UpdateReport rep;
    try {
      rep = sds_update(thetas[k], renderers[k], prior, problem.sources[k].cond, sds, step);
    } catch (const TransportError& e) {
      throw TransportError("source " + std::to_string(k) + ": " + e.what());
    }
    for (std::size_t i = 0; i < rep.gradient.size(); ++i) out.gradients[k][i] += problem.cfg.gamma * rep.gradient[i];
    out.sds.push_back(std::move(rep));
  }
  return out;
}

struct SeparationModel {
  std::vector<SourceRenderer> renderers;
  std::vector<std::vector<double>> thetas;
};

/// Renderers and initial parameters: latents at enc(m / K) + N(0, init_noise),
/// waveforms at m / K.
inline SeparationModel init_separation(const SeparationProblem& problem, DiffusionPrior& prior) {
  problem.validate();
  SeparationModel model;
  const auto base = baseline_assignment(problem.mixture, problem.k());
  Rng rng(derive_seed(problem.cfg.seed, 0x1417));
  for (std::size_t k = 0; k < problem.k(); ++k) {
    if (problem.cfg.parametrization == SourceParametrization::latent) {
      Latent h = prior.encode(base[k]);
      const auto decoded = prior.info().compression_factor * h.frames;
      if (decoded != problem.mixture.frames())
        throw ConfigError("mixture length must be a multiple of the prior's compression factor for latent sources");
      auto noise = gaussian_vector(rng, h.size(), problem.cfg.init_noise);
      for (std::size_t i = 0; i < h.size(); ++i) h.values[i] += noise[i];
      model.renderers.emplace_back(LatentSourceRenderer(prior, h.channels, h.frames));
      model.thetas.push_back(std::move(h.values));
    } else {
      model.renderers.emplace_back(IdentityRenderer(problem.mixture.frames(), problem.mixture.sample_rate()));
      model.thetas.emplace_back(base[k].flat().begin(), base[k].flat().end());
    }
  }
  return model;
}

struct SeparationResult {
  std::vector<std::vector<double>> thetas;
  std::vector<Waveform> sources;
  double final_recon_loss = 0.0;
  std::vector<nlohmann::json> log;
};

using SeparationObserver = std::function<void(std::size_t step, const SeparationModel&, const nlohmann::json& record)>;

inline nlohmann::json separation_record(std::size_t step, const SeparationStep& s, const Waveform& mixture) {
  std::vector<double> residuals, grad_norms, ts;
  for (std::size_t k = 0; k < s.sds.size(); ++k) {
    residuals.push_back(s.sds[k].mean_residual_norm);
    grad_norms.push_back(norm(std::span<const double>(s.gradients[k])));
  }
  double mix_sdr = kSdrCapDb;
  try {
    mix_sdr = si_sdr(mixture, s.estimate);
  } catch (const UndefinedMetric&) {
  }
  return {{"step", step},
          {"recon_loss", s.recon_loss},
          {"mixture_si_sdr", mix_sdr},
          {"sds_mean_residual", residuals},
          {"gradient_norm", grad_norms},
          {"t", s.sds.empty() ? std::vector<double>{} : s.sds.front().timesteps}};
}

/// Adam (or SGD) over all sources jointly; logs every log_every steps and at
/// the end. Non-finite parameters abort with the last finite set.
inline SeparationResult optimize_separation(const SeparationProblem& problem, DiffusionPrior& prior,
                                            const SeparationObserver& observer = {}) {
  auto model = init_separation(problem, prior);
  std::vector<Optimizer> opts;
  for (const auto& th : model.thetas) opts.emplace_back(problem.cfg.optimizer, th.size());
  SeparationResult result;
  auto last_good = model.thetas;
  for (std::size_t step = 0; step < problem.cfg.steps; ++step) {
    auto s = separation_update(problem, model.renderers, model.thetas, prior, step);
    const bool log_now = step % problem.cfg.log_every == 0;
    if (log_now) {
      auto rec = separation_record(step, s, problem.mixture);
      result.log.push_back(rec);
      if (observer) observer(step, model, rec);
    }
    for (std::size_t k = 0; k < model.thetas.size(); ++k) opts[k].step(model.thetas[k], s.gradients[k]);
    for (const auto& th : model.thetas)
      for (double v : th)
        if (!std::isfinite(v)) throw NumericAbort("non-finite source parameters", step, last_good);
    last_good = model.thetas;
  }
  auto final_res = mixture_residual(problem.mixture, model.renderers, model.thetas, problem.cfg.recon);
  result.final_recon_loss = final_res.loss;
  for (std::size_t k = 0; k < model.thetas.size(); ++k) result.sources.push_back(model.renderers[k].render(model.thetas[k]));
  result.thetas = std::move(model.thetas);
  nlohmann::json fin{{"step", problem.cfg.steps}, {"recon_loss", final_res.loss}, {"final", true}};
  try {
    fin["mixture_si_sdr"] = si_sdr(problem.mixture, final_res.estimate);
  } catch (const UndefinedMetric&) {
  }
  result.log.push_back(fin);
  return result;
}

}  // namespace audiosds
