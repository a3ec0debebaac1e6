#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audiosds/app/config.hpp"
#include "audiosds/app/fixtures.hpp"
#include "audiosds/bridge/client.hpp"
#include "audiosds/clients/text_client.hpp"
#include "audiosds/metrics/report.hpp"
#include "audiosds/prior/oracle.hpp"
#include "audiosds/prior/toy.hpp"
#include "audiosds/render/fm.hpp"
#include "audiosds/render/impact.hpp"
#include "audiosds/render/params_io.hpp"
#include "audiosds/sds/optimize.hpp"
#include "audiosds/separation/separation.hpp"
#include "audiosds/signal/export.hpp"
#include "audiosds/signal/wav.hpp"

// Task runners behind the CLI. Each writes into cfg.out:
//   config.json      resolved configuration (re-runnable with --config)
//   run.log          one JSON object per logged step, no wall-clock fields
//   metrics.csv      per-step scalars
//   checkpoints/     parameter checkpoints (text, see params_io.hpp)
//   audio/, plots/   WAV renders and spectrogram PNGs
//   report.csv       separation metrics (separate, eval)
//   summary.json     final numbers

namespace audiosds::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBackend = 3;
inline constexpr int kExitNumeric = 4;

/// Exit code for an exception escaping a run.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const TrainingError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const TransportError*>(&e) || dynamic_cast<const ProtocolError*>(&e) ||
      dynamic_cast<const CapabilityError*>(&e) || dynamic_cast<const ClientError*>(&e))
    return kExitBackend;
  if (dynamic_cast<const Error*>(&e)) return kExitConfig;
  return 1;
}

class RunDir {
 public:
  explicit RunDir(const std::filesystem::path& root) : root_(root) {
    std::filesystem::create_directories(root_ / "checkpoints");
    std::filesystem::create_directories(root_ / "audio");
    std::filesystem::create_directories(root_ / "plots");
    log_.open(root_ / "run.log", std::ios::binary | std::ios::trunc);
    if (!log_) throw ConfigError("cannot write into " + root_.string());
  }

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path operator/(const std::string& rel) const { return root_ / rel; }

  void log(const nlohmann::json& rec) {
    log_ << rec.dump() << '\n';
    log_.flush();
  }

  void write_text(const std::string& rel, const std::string& text) const {
    std::ofstream f(root_ / rel, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write " + (root_ / rel).string());
    f << text;
  }

  void write_json(const std::string& rel, const nlohmann::json& j) const { write_text(rel, j.dump(2) + "\n"); }

 private:
  std::filesystem::path root_;
  std::ofstream log_;
};

inline std::string step_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06zu", step);
  return buf;
}

inline std::string num(double v) { return audiosds::detail::format_double(v); }

inline std::unique_ptr<DiffusionPrior> make_prior(const RunConfig& cfg, int oracle_rate) {
  switch (cfg.backend) {
    case Backend::toy: return std::make_unique<ToyPrior>(ToyPriorCheckpoint::load(cfg.checkpoint));
    case Backend::bridge: return std::make_unique<bridge::BridgePrior>(cfg.bridge_addr);
    case Backend::oracle: return std::make_unique<OraclePrior>(oracle_rate, true);
  }
  throw ConfigError("unknown backend");
}

inline CorpusSpec corpus_by_name(const std::string& name, std::uint64_t seed) {
  if (name == "three_class") return three_class_corpus(seed);
  return traffic_sax_corpus(seed);
}

// ---- synthesis ----

template <class R, class Checkpoint>
nlohmann::json run_synthesis(const RunConfig& cfg, RunDir& dir, const R& renderer, std::vector<double> theta0,
                             DiffusionPrior& prior, const Checkpoint& checkpoint) {
  SynthesisConfig sc;
  sc.sds = cfg.sds;
  sc.optimizer = cfg.optimizer;
  sc.steps = cfg.steps;
  sc.log_every = cfg.log_every;
  write_params(checkpoint(theta0, 0), dir / "checkpoints/init.params");
  std::ofstream csv(dir / "metrics.csv", std::ios::binary);
  csv << "step,mean_residual,gradient_norm\n";
  auto observer = [&](std::size_t step, std::span<const double> theta, const nlohmann::json& rec) {
    dir.log(rec);
    csv << step << ',' << num(rec["mean_residual"].get<double>()) << ',' << num(rec["gradient_norm"].get<double>())
        << '\n';
    if (step > 0 && step % cfg.checkpoint_every == 0)
      write_params(checkpoint(theta, step), dir / ("checkpoints/" + step_name(step) + ".params"));
  };
  SynthesisResult res;
  try {
    res = optimize_synthesis(theta0, renderer, prior, cfg.cond, sc, observer);
  } catch (const NumericAbort& e) {
    write_params(checkpoint(e.last_good().front(), e.step()), dir / "checkpoints/last_good.params");
    dir.log({{"event", "numeric_abort"}, {"step", e.step()}});
    throw;
  }
  write_params(checkpoint(res.theta, cfg.steps), dir / "checkpoints/final.params");
  const auto init = renderer.render(theta0);
  const auto fin = renderer.render(res.theta);
  wav_write(init, dir / "audio/init.wav");
  wav_write(fin, dir / "audio/final.wav");
  const std::size_t win = cfg.sds.spectrogram.window_sizes.front();
  write_spectrogram_comparison_png({&init, &fin}, win, dir / "plots/init_vs_final.png");
  nlohmann::json summary{{"task", to_string(cfg.task)},
                         {"run_id", cfg.run_id},
                         {"backend", prior.name()},
                         {"conditioning", cfg.cond.describe()},
                         {"steps", cfg.steps},
                         {"final_mean_residual", res.log.back()["mean_residual"]},
                         {"rms_final", norm(fin) / std::sqrt(2.0 * static_cast<double>(fin.frames()))}};
  dir.log({{"event", "done"}, {"summary", summary}});
  return summary;
}

inline int synthesis_rate(const RunConfig& cfg, DiffusionPrior* prior) {
  if (cfg.sample_rate) return *cfg.sample_rate;
  return prior ? prior->info().sample_rate : kDefaultSampleRate;
}

inline nlohmann::json run_synth_fm(const RunConfig& cfg, RunDir& dir) {
  const int oracle_rate = cfg.sample_rate.value_or(kDefaultSampleRate);
  auto prior = make_prior(cfg, oracle_rate);
  const int sr = synthesis_rate(cfg, prior.get());
  FmFrequencyRange range;
  range.max_hz = std::min(range.max_hz, 0.45 * sr);
  FmRenderer r(cfg.fm_operators, {cfg.duration, sr}, range);
  Rng rng(derive_seed(cfg.seed, 0x1417));
  const auto theta0 = fm_initial_params(cfg.fm_operators, rng).pack();
  return run_synthesis(cfg, dir, r, theta0, *prior, [&](std::span<const double> th, std::size_t step) {
    return fm_checkpoint(th, cfg.fm_operators, step);
  });
}

inline nlohmann::json run_synth_impact(const RunConfig& cfg, RunDir& dir) {
  const int oracle_rate = cfg.sample_rate.value_or(kDefaultSampleRate);
  auto prior = make_prior(cfg, oracle_rate);
  const int sr = synthesis_rate(cfg, prior.get());
  ImpactOptions opt;
  ImpactRenderer r(cfg.impact_modes, {cfg.duration, sr}, cfg.impact_noise_seed, opt);
  Rng rng(derive_seed(cfg.seed, 0x1417));
  const auto theta0 =
      r.initial_params(rng, cfg.impact_spacing, cfg.impact_lo_hz, cfg.impact_hi_hz, cfg.impact_freq_noise);
  return run_synthesis(cfg, dir, r, theta0, *prior, [&](std::span<const double> th, std::size_t step) {
    return impact_checkpoint(th, cfg.impact_modes, cfg.impact_noise_seed, step);
  });
}

// ---- separation and evaluation ----

inline std::vector<ReportWindow> report_windows(std::size_t frames) {
  return {ReportWindow::full(frames), ReportWindow::first_half(frames)};
}

inline std::unique_ptr<TextClient> clap_client_from_env() { return HttpTextClient::from_env("AUDIOSDS_CLAP_URL"); }

inline std::vector<Waveform> read_wavs(const std::vector<std::string>& paths, const Waveform& like,
                                       const std::string& what) {
  std::vector<Waveform> out;
  for (const auto& p : paths) {
    auto w = wav_read(p);
    if (w.frames() != like.frames() || w.sample_rate() != like.sample_rate())
      throw ConfigError(what + " '" + p + "' differs from the mixture in length or sample rate");
    out.push_back(std::move(w));
  }
  return out;
}

inline std::vector<std::string> source_prompts(const RunConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& s : cfg.sources) out.push_back(s.cond.prompt ? *s.cond.prompt : s.label);
  return out;
}

inline nlohmann::json run_separate(const RunConfig& cfg, RunDir& dir) {
  const auto mixture = wav_read(cfg.mixture);
  auto prior = make_prior(cfg, mixture.sample_rate());
  if (prior->info().sample_rate != mixture.sample_rate())
    throw ConfigError("mixture is sampled at " + std::to_string(mixture.sample_rate()) + " Hz but the " + prior->name() +
                      " prior runs at " + std::to_string(prior->info().sample_rate) + " Hz");
  const auto references = read_wavs(cfg.references, mixture, "reference");
  SeparationProblem problem;
  problem.mixture = mixture;
  for (const auto& s : cfg.sources) problem.sources.push_back({s.label, s.cond});
  problem.cfg = cfg.separation_config();

  std::ofstream csv(dir / "metrics.csv", std::ios::binary);
  csv << "step,recon_loss,mixture_si_sdr";
  for (std::size_t k = 0; k < problem.k(); ++k) csv << ",sds_residual_" << k + 1;
  csv << '\n';
  std::vector<Waveform> init_sources;
  auto save_thetas = [&](const std::vector<std::vector<double>>& thetas, std::size_t step, const std::string& name) {
    for (std::size_t k = 0; k < thetas.size(); ++k) {
      ParamCheckpoint c;
      if (problem.cfg.parametrization == SourceParametrization::latent) {
        const auto info = prior->info();
        c = latent_checkpoint(thetas[k], info.latent_channels, thetas[k].size() / info.latent_channels,
                              problem.sources[k].label, step);
      } else {
        c = latent_checkpoint(thetas[k], Waveform::kChannels, thetas[k].size() / 2, problem.sources[k].label, step);
        c.renderer = "waveform";
      }
      write_params(c, dir / ("checkpoints/" + name + "_source" + std::to_string(k + 1) + ".params"));
    }
  };
  auto observer = [&](std::size_t step, const SeparationModel& m, const nlohmann::json& rec) {
    if (step == 0)
      for (std::size_t k = 0; k < m.thetas.size(); ++k) init_sources.push_back(m.renderers[k].render(m.thetas[k]));
    dir.log(rec);
    csv << step << ',' << num(rec["recon_loss"].get<double>()) << ',' << num(rec["mixture_si_sdr"].get<double>());
    for (const auto& r : rec["sds_mean_residual"]) csv << ',' << num(r.get<double>());
    csv << '\n';
    if (step > 0 && step % cfg.checkpoint_every == 0) save_thetas(m.thetas, step, step_name(step));
  };
  SeparationResult res;
  try {
    res = optimize_separation(problem, *prior, observer);
  } catch (const NumericAbort& e) {
    save_thetas(e.last_good(), e.step(), "last_good");
    dir.log({{"event", "numeric_abort"}, {"step", e.step()}});
    throw;
  }
  dir.log(res.log.back());
  save_thetas(res.thetas, cfg.steps, "final");

  const auto estimate = sum_sources(res.sources);
  wav_write(estimate, dir / "audio/mixture_estimate.wav");
  const std::size_t win = problem.cfg.recon.window_sizes.front();
  write_spectrogram_comparison_png({&mixture, &estimate}, win, dir / "plots/mixture_vs_estimate.png");
  for (std::size_t k = 0; k < res.sources.size(); ++k) {
    const auto idx = std::to_string(k + 1);
    wav_write(res.sources[k], dir / ("audio/source_" + idx + ".wav"));
    std::vector<const Waveform*> panels;
    if (k < init_sources.size()) panels.push_back(&init_sources[k]);
    panels.push_back(&res.sources[k]);
    if (!references.empty()) panels.push_back(&references[k]);
    write_spectrogram_comparison_png(panels, win, dir / ("plots/source_" + idx + ".png"));
  }

  auto clap = clap_client_from_env();
  ReportInputs in{cfg.mixture_id, cfg.run_id, mixture, res.sources, references, source_prompts(cfg), cfg.sdr_kind};
  auto report = build_separation_report(in, report_windows(mixture.frames()), clap.get());
  ReportInputs base_in = in;
  base_in.run_id = cfg.run_id + "/baseline";
  base_in.estimates = baseline_assignment(mixture, problem.k());
  const auto base = build_separation_report(base_in, report_windows(mixture.frames()), nullptr);

  nlohmann::json summary{{"task", "separate"},
                         {"run_id", cfg.run_id},
                         {"backend", prior->name()},
                         {"final_recon_loss", res.final_recon_loss},
                         {"mixture_si_sdr", res.log.back().value("mixture_si_sdr", nlohmann::json(nullptr))}};
  for (const auto& w : {"full", "first_half"}) {
    const auto m = report.mean_source_sdr(w);
    const auto b = base.mean_source_sdr(w);
    summary[std::string("mean_source_sdr_") + w] = m ? nlohmann::json(*m) : nlohmann::json(nullptr);
    summary[std::string("sdr_improvement_") + w] = m && b ? nlohmann::json(*m - *b) : nlohmann::json(nullptr);
  }
  report.rows.insert(report.rows.end(), base.rows.begin(), base.rows.end());
  report.write_csv(dir / "report.csv");
  dir.log({{"event", "done"}, {"summary", summary}});
  return summary;
}

inline nlohmann::json run_eval(const RunConfig& cfg, RunDir& dir) {
  const auto mixture = wav_read(cfg.mixture);
  const auto estimates = read_wavs(cfg.estimates, mixture, "estimate");
  const auto references = read_wavs(cfg.references, mixture, "reference");
  auto clap = clap_client_from_env();
  std::vector<std::string> prompts;
  if (cfg.sources.size() == estimates.size()) prompts = source_prompts(cfg);
  ReportInputs in{cfg.mixture_id, cfg.run_id, mixture, estimates, references, prompts, cfg.sdr_kind};
  const auto report = build_separation_report(in, report_windows(mixture.frames()), clap.get());
  report.write_csv(dir / "report.csv");
  nlohmann::json summary{{"task", "eval"}, {"run_id", cfg.run_id}, {"rows", report.rows.size()}};
  for (const auto& w : {"full", "first_half"}) {
    const auto m = report.mean_source_sdr(w);
    summary[std::string("mean_source_sdr_") + w] = m ? nlohmann::json(*m) : nlohmann::json(nullptr);
  }
  dir.log({{"event", "done"}, {"summary", summary}});
  return summary;
}

// ---- toy prior training ----

inline nlohmann::json run_train_toy_prior(const RunConfig& cfg, RunDir& dir) {
  const auto corpus = corpus_by_name(cfg.corpus, cfg.seed);
  auto training = cfg.training;
  training.seed = cfg.seed;
  const auto ck = train_toy_prior(corpus, training);
  ck.save(cfg.checkpoint);
  std::ofstream csv(dir / "metrics.csv", std::ios::binary);
  csv << "step,mean_loss\n";
  for (std::size_t i = 0; i < ck.loss_curve.size(); ++i) {
    const auto step = (i + 1) * training.log_every;
    csv << step << ',' << num(ck.loss_curve[i]) << '\n';
    dir.log({{"step", step}, {"mean_loss", ck.loss_curve[i]}});
  }
  // Class sanity: the matched label should denoise better than a rotated one.
  const double mismatched =
      eval_denoiser_mse(ck.denoiser, ck.corpus, ck.codec, training.crop_frames, training.seed, 1);
  nlohmann::json summary{{"task", "train-toy-prior"},
                         {"checkpoint", cfg.checkpoint},
                         {"checkpoint_hash", ck.hash()},
                         {"initial_eval_mse", ck.initial_eval_mse},
                         {"final_eval_mse", ck.final_eval_mse},
                         {"mismatched_class_eval_mse", mismatched}};
  dir.log({{"event", "done"}, {"summary", summary}});
  return summary;
}

/// Writes a two-source toy mixture (mixture.wav, reference_k.wav) and a
/// matching separation config into `dir`.
inline nlohmann::json write_toy_mixture(const std::filesystem::path& checkpoint, const ToySeparationFixture& f,
                                        const std::filesystem::path& dir) {
  const auto ck = ToyPriorCheckpoint::load(checkpoint);
  const auto c = make_toy_separation(ck.corpus, f);
  std::filesystem::create_directories(dir);
  wav_write(c.problem.mixture, dir / "mixture.wav");
  nlohmann::json sources = nlohmann::json::array(), refs = nlohmann::json::array();
  for (std::size_t k = 0; k < c.references.size(); ++k) {
    const auto p = dir / ("reference_" + std::to_string(k + 1) + ".wav");
    wav_write(c.references[k], p);
    refs.push_back(p.string());
    sources.push_back({{"label", c.problem.sources[k].label}, {"class_id", *c.problem.sources[k].cond.class_id}});
  }
  nlohmann::json cfg{{"task", "separate"},
                     {"checkpoint", checkpoint.string()},
                     {"steps", f.steps},
                     {"log_every", f.log_every},
                     {"sds",
                      {{"guidance_scale", f.guidance_scale},
                       {"batch_size", f.batch_size},
                       {"n_denoise_steps", f.n_denoise_steps},
                       {"t_min", f.t_min},
                       {"t_max", f.t_max},
                       {"window_sizes", f.windows}}},
                     {"optimizer", {{"lr", f.lr}}},
                     {"separation",
                      {{"mixture", (dir / "mixture.wav").string()},
                       {"sources", sources},
                       {"references", refs},
                       {"gamma", f.gamma},
                       {"recon_window_sizes", f.windows}}}};
  std::ofstream(dir / "separate.json", std::ios::binary) << cfg.dump(2) << "\n";
  return cfg;
}

// ---- ablations ----

inline ToySeparationFixture fixture_from_options(const nlohmann::json& o, const RunConfig& cfg) {
  ToySeparationFixture f;
  f.seed = cfg.seed;
  f.frames = o.value("frames", f.frames);
  f.steps = o.value("steps", f.steps);
  f.guidance_scale = o.value("guidance_scale", f.guidance_scale);
  f.gamma = o.value("gamma", f.gamma);
  f.lr = o.value("lr", f.lr);
  f.log_every = o.value("log_every", f.log_every);
  return f;
}

struct ArmResult {
  std::string arm;
  nlohmann::json metrics;
};

/// Separation with 1 vs `multi` denoising steps on the toy fixture; each
/// arm is scored with the full objective at its own step count.
inline std::vector<ArmResult> ablate_denoise_steps(DiffusionPrior& prior, const CorpusSpec& corpus,
                                                   const ToySeparationFixture& f, int multi,
                                                   const std::function<void(const std::string&, const nlohmann::json&)>& log = {}) {
  std::vector<ArmResult> out;
  for (int n : {1, multi}) {
    auto fx = f;
    fx.n_denoise_steps = n;
    auto c = make_toy_separation(corpus, fx);
    const auto arm = "n_steps_" + std::to_string(n);
    auto res = optimize_separation(c.problem, prior, [&](std::size_t, const SeparationModel&, const nlohmann::json& rec) {
      if (log) log(arm, rec);
    });
    auto model = init_separation(c.problem, prior);
    const auto obj = separation_objective(c.problem, model.renderers, res.thetas, prior, derive_seed(f.seed, 0xe7a1));
    out.push_back({arm,
                   {{"n_denoise_steps", n},
                    {"objective", obj.total()},
                    {"recon_loss", obj.recon},
                    {"sds_term", obj.sds},
                    {"mean_source_si_sdr", mean_si_sdr(c.references, res.sources)},
                    {"mixture_si_sdr", si_sdr(c.problem.mixture, sum_sources(res.sources))}}});
  }
  return out;
}

inline std::vector<ArmResult> ablate_spectrogram_vs_l2(const ImpactFitFixture& f) {
  std::vector<ArmResult> out;
  for (auto v : {SdsVariant::decoder, SdsVariant::spec_decoder}) {
    const auto r = run_impact_fit(f, v);
    out.push_back({v == SdsVariant::decoder ? "l2" : "spectrogram",
                   {{"variant", to_string(v)}, {"spectral_loss", r.spectral_loss}, {"l2", r.l2}}});
  }
  return out;
}

/// Classic (encoder VJP) vs decoder SDS on FM synthesis against the
/// configured prior. Fails up front if the backend has no encoder VJP.
inline std::vector<ArmResult> ablate_decoder_vs_classic(const RunConfig& cfg, DiffusionPrior& prior) {
  if (!prior.has_encoder_vjp())
    throw CapabilityError("the classic arm needs an encoder VJP, which the " + prior.name() + " backend lacks");
  const int sr = synthesis_rate(cfg, &prior);
  FmFrequencyRange range;
  range.max_hz = std::min(range.max_hz, 0.45 * sr);
  FmRenderer r(cfg.fm_operators, {cfg.ablation_options.value("duration", 1.0), sr}, range);
  Rng rng(derive_seed(cfg.seed, 0x1417));
  const auto theta0 = fm_initial_params(cfg.fm_operators, rng).pack();
  std::vector<ArmResult> out;
  for (auto v : {SdsVariant::classic, SdsVariant::decoder}) {
    SynthesisConfig sc;
    sc.sds = cfg.sds;
    sc.sds.variant = v;
    sc.optimizer = cfg.optimizer;
    sc.steps = cfg.ablation_options.value("steps", std::size_t{200});
    sc.log_every = sc.steps;
    const auto res = optimize_synthesis(theta0, r, prior, cfg.cond, sc);
    // Both arms are scored by the decoder-space residual at the same draws.
    SdsConfig score = cfg.sds;
    score.variant = SdsVariant::decoder;
    UpdateReport rep;
    sds_waveform_cotangent(r.render(res.theta), prior, cfg.cond, score, derive_seed(cfg.seed, 0xe7a1), rep);
    out.push_back({to_string(v), {{"variant", to_string(v)}, {"decoder_residual", rep.mean_residual_norm}}});
  }
  return out;
}

inline nlohmann::json run_ablate(const RunConfig& cfg, RunDir& dir) {
  std::vector<ArmResult> arms;
  nlohmann::json fixture;
  switch (cfg.ablation) {
    case AblationKind::spectrogram_vs_l2: {
      ImpactFitFixture f;
      f.seed = cfg.seed;
      f.steps = cfg.ablation_options.value("steps", f.steps);
      f.modes = cfg.ablation_options.value("modes", f.modes);
      f.lr = cfg.ablation_options.value("lr", f.lr);
      fixture = f.to_json();
      arms = ablate_spectrogram_vs_l2(f);
      break;
    }
    case AblationKind::single_vs_multistep: {
      if (cfg.backend != Backend::toy) throw ConfigError("the denoising-steps ablation runs on the toy backend");
      ToyPrior prior(ToyPriorCheckpoint::load(cfg.checkpoint));
      const auto f = fixture_from_options(cfg.ablation_options, cfg);
      fixture = f.to_json();
      arms = ablate_denoise_steps(prior, prior.checkpoint().corpus, f, cfg.ablation_options.value("multi_steps", 5),
                                  [&](const std::string& arm, const nlohmann::json& rec) {
                                    auto r = rec;
                                    r["arm"] = arm;
                                    dir.log(r);
                                  });
      break;
    }
    case AblationKind::decoder_vs_classic: {
      auto prior = make_prior(cfg, cfg.sample_rate.value_or(kDefaultSampleRate));
      fixture = {{"operators", cfg.fm_operators}};
      arms = ablate_decoder_vs_classic(cfg, *prior);
      break;
    }
  }
  std::ofstream csv(dir / "ablation.csv", std::ios::binary);
  csv << "ablation,arm,metric,value\n";
  nlohmann::json summary{{"task", "ablate"}, {"ablation", to_string(cfg.ablation)}, {"fixture", fixture}};
  for (const auto& a : arms) {
    for (auto it = a.metrics.begin(); it != a.metrics.end(); ++it)
      if (it.value().is_number()) csv << to_string(cfg.ablation) << ',' << a.arm << ',' << it.key() << ','
                                      << num(it.value().get<double>()) << '\n';
    summary["arms"][a.arm] = a.metrics;
  }
  dir.log({{"event", "done"}, {"summary", summary}});
  return summary;
}

/// Runs the configured task. Errors propagate; map them with exit_code_for.
inline nlohmann::json run(const RunConfig& cfg) {
  RunDir dir(cfg.out);
  dir.write_json("config.json", cfg.resolved);
  nlohmann::json summary;
  switch (cfg.task) {
    case Task::synth_fm: summary = run_synth_fm(cfg, dir); break;
    case Task::synth_impact: summary = run_synth_impact(cfg, dir); break;
    case Task::separate: summary = run_separate(cfg, dir); break;
    case Task::eval: summary = run_eval(cfg, dir); break;
    case Task::train_toy_prior: summary = run_train_toy_prior(cfg, dir); break;
    case Task::ablate: summary = run_ablate(cfg, dir); break;
  }
  dir.write_json("summary.json", summary);
  return summary;
}

}  // namespace audiosds::app
