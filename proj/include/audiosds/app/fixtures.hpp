#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audiosds/metrics/sdr.hpp"
#include "audiosds/prior/oracle.hpp"
#include "audiosds/prior/toy.hpp"
#include "audiosds/render/impact.hpp"
#include "audiosds/sds/optimize.hpp"
#include "audiosds/separation/separation.hpp"

// Small reproducible problems shared by the acceptance checks and the
// ablation command.

namespace audiosds::app {

// ---- toy separation ----

/// Two held-out corpus items (one per class) summed into a short mixture.
/// Windows are scaled to the 8 kHz toy rate so they cover about the same
/// durations as 1024..4096 at 44.1 kHz.
struct ToySeparationFixture {
  std::size_t frames = 8000;
  std::uint64_t item_index = kHeldOutIndexBase + 100;
  double guidance_scale = 3.0;
  double gamma = 0.02;
  std::size_t batch_size = 10;
  double lr = 5e-2;
  int n_denoise_steps = 2;
  double t_min = 0.025, t_max = 0.875;
  std::vector<std::size_t> windows = {256, 512, 1024};
  std::size_t steps = 300;
  std::size_t log_every = 25;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"frames", frames},   {"item_index", item_index}, {"guidance_scale", guidance_scale},
            {"gamma", gamma},     {"batch_size", batch_size}, {"lr", lr},
            {"n_denoise_steps", n_denoise_steps}, {"t_min", t_min}, {"t_max", t_max},
            {"windows", windows}, {"steps", steps},           {"seed", seed}};
  }
};

struct ToySeparationCase {
  SeparationProblem problem;
  std::vector<Waveform> references;
};

inline ToySeparationCase make_toy_separation(const CorpusSpec& corpus, const ToySeparationFixture& f) {
  if (corpus.classes.size() < 2) throw ConfigError("toy separation needs a corpus with two classes");
  ToySeparationCase c;
  Waveform mix;
  for (int k = 0; k < 2; ++k) {
    auto item = corpus_item(corpus, k, f.item_index);
    if (item.frames() < f.frames) throw ConfigError("toy separation clip is longer than the corpus items");
    c.references.push_back(item.slice(0, f.frames));
    c.problem.sources.push_back({corpus.classes[static_cast<std::size_t>(k)].name, Conditioning::label(k)});
    mix = k == 0 ? c.references.back() : mix + c.references.back();
  }
  c.problem.mixture = mix;
  auto& cfg = c.problem.cfg;
  cfg.gamma = f.gamma;
  cfg.parametrization = SourceParametrization::latent;
  cfg.sds.t_min = f.t_min;
  cfg.sds.t_max = f.t_max;
  cfg.sds.guidance_scale = f.guidance_scale;
  cfg.sds.batch_size = f.batch_size;
  cfg.sds.n_denoise_steps = f.n_denoise_steps;
  cfg.sds.variant = SdsVariant::spec_decoder;
  cfg.sds.spectrogram.window_sizes = f.windows;
  cfg.sds.seed = derive_seed(f.seed, 0x5d5);
  cfg.recon.window_sizes = f.windows;
  cfg.optimizer = {OptimizerKind::adam, f.lr};
  cfg.steps = f.steps;
  cfg.log_every = f.log_every;
  cfg.seed = f.seed;
  return c;
}

/// Mean per-source SI-SDR of `estimates` against `references`.
inline double mean_si_sdr(const std::vector<Waveform>& references, const std::vector<Waveform>& estimates) {
  double s = 0.0;
  for (std::size_t k = 0; k < references.size(); ++k) s += si_sdr(references[k], estimates[k]);
  return s / static_cast<double>(references.size());
}

inline Waveform sum_sources(const std::vector<Waveform>& sources) {
  Waveform out(sources.front().frames(), sources.front().sample_rate());
  for (const auto& s : sources) out += s;
  return out;
}

struct SeparationObjective {
  double recon = 0.0;
  double sds = 0.0;  // gamma * sum_k 0.5 * mean_b |S(x_k) - S(x_hat_k)|^2
  double total() const { return recon + sds; }
};

/// The separation objective at fixed parameters: reconstruction loss plus
/// the gamma-weighted spectrogram-space SDS surrogate, with per-sample
/// draws taken from `eval_step` so different runs are scored alike.
inline SeparationObjective separation_objective(const SeparationProblem& problem, const std::vector<SourceRenderer>& renderers,
                                                const std::vector<std::vector<double>>& thetas, DiffusionPrior& prior,
                                                std::uint64_t eval_step) {
  SeparationObjective o;
  o.recon = mixture_residual(problem.mixture, renderers, thetas, problem.cfg.recon).loss;
  SdsConfig sds = problem.cfg.sds;
  sds.variant = SdsVariant::spec_decoder;
  for (std::size_t k = 0; k < renderers.size(); ++k) {
    UpdateReport rep;
    sds_waveform_cotangent(renderers[k].render(thetas[k]), prior, problem.sources[k].cond, sds, eval_step, rep);
    double m = 0.0;
    for (double r : rep.residual_norms) m += r * r;
    o.sds += problem.cfg.gamma * 0.5 * m / static_cast<double>(rep.residual_norms.size());
  }
  return o;
}

// ---- impact fit-to-target ----

/// Impact render from random parameters as the target; a frozen-target
/// prior pulls a differently initialised impact model towards it.
struct ImpactFitFixture {
  std::size_t modes = 16;
  int sample_rate = 8000;
  double duration = 0.5;
  std::size_t steps = 200;
  double lr = 2e-2;
  std::size_t batch_size = 1;
  std::vector<std::size_t> windows = {256, 512, 1024};
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"modes", modes}, {"sample_rate", sample_rate}, {"duration", duration}, {"steps", steps},
            {"lr", lr},       {"batch_size", batch_size},   {"windows", windows},   {"seed", seed}};
  }
};

struct ImpactFitCase {
  ImpactRenderer renderer;
  Waveform target;
  std::vector<double> theta0;
};

inline ImpactFitCase make_impact_fit(const ImpactFitFixture& f) {
  ImpactRenderer r(f.modes, {f.duration, f.sample_rate}, derive_seed(f.seed, 0x1e));
  Rng target_rng(derive_seed(f.seed, 0x7a));
  Rng init_rng(derive_seed(f.seed, 0x17));
  auto theta_star = r.initial_params(target_rng, FrequencySpacing::log, 150.0, 3000.0, 0.3);
  auto target = r.render(theta_star);
  auto theta0 = r.initial_params(init_rng, FrequencySpacing::linear, 100.0, 18000.0, 1e-4);
  return {r, target, theta0};
}

struct ImpactFitResult {
  std::vector<double> theta;
  Waveform render;
  double spectral_loss = 0.0;
  double l2 = 0.0;
  std::vector<nlohmann::json> log;
};

inline ImpactFitResult run_impact_fit(const ImpactFitFixture& f, SdsVariant variant) {
  auto c = make_impact_fit(f);
  FrozenTargetPrior prior(c.target);
  SynthesisConfig cfg;
  cfg.sds.t_min = 0.7;
  cfg.sds.t_max = 1.0;
  cfg.sds.guidance_scale = 1.0;
  cfg.sds.batch_size = f.batch_size;
  cfg.sds.n_denoise_steps = 1;
  cfg.sds.variant = variant;
  cfg.sds.spectrogram.window_sizes = f.windows;
  cfg.sds.seed = derive_seed(f.seed, 0x5d5);
  cfg.optimizer = {OptimizerKind::adam, f.lr};
  cfg.steps = f.steps;
  cfg.log_every = 10;
  auto res = optimize_synthesis(c.theta0, c.renderer, prior, Conditioning::null(), cfg);
  ImpactFitResult out;
  out.render = c.renderer.render(res.theta);
  SpectrogramConfig sc;
  sc.window_sizes = f.windows;
  out.spectral_loss = spectral_recon_loss(c.target, out.render, sc).loss;
  out.l2 = squared_norm(out.render - c.target);
  out.theta = std::move(res.theta);
  out.log = std::move(res.log);
  return out;
}

}  // namespace audiosds::app
