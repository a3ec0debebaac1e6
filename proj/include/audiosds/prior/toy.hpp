#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audiosds/error.hpp"
#include "audiosds/optim.hpp"
#include "audiosds/prior/prior.hpp"
#include "audiosds/prior/toy_codec.hpp"
#include "audiosds/prior/toy_corpus.hpp"
#include "audiosds/prior/toy_net.hpp"
#include "audiosds/random.hpp"

// Desk-scale stand-in for a pretrained latent diffusion model: a PCA block
// codec and a class-conditional noise predictor trained on a synthetic
// corpus.

namespace audiosds {

struct ToyTrainingConfig {
  std::size_t steps = 2000;
  std::size_t batch = 16;
  std::size_t crop_frames = 128;
  double lr = 2e-3;
  double p_uncond = 0.2;
  std::size_t items_per_class = 48;
  bool identity_codec = false;
  std::size_t codec_stride = 16;
  std::size_t codec_channels = 14;
  std::size_t hidden = 48;
  std::size_t kernel = 9;
  std::size_t log_every = 50;
  std::uint64_t seed = 0;

  void validate() const {
    if (steps == 0 || batch == 0 || crop_frames == 0 || items_per_class == 0 || log_every == 0)
      throw ConfigError("toy training sizes must be positive");
    if (!(lr > 0.0)) throw ConfigError("toy training learning rate must be positive");
    if (!(p_uncond >= 0.0 && p_uncond <= 1.0)) throw ConfigError("p_uncond must lie in [0, 1]");
    if (kernel % 2 == 0) throw ConfigError("toy denoiser kernel must be odd");
  }

  nlohmann::json to_json() const {
    return {{"steps", steps},
            {"batch", batch},
            {"crop_frames", crop_frames},
            {"lr", lr},
            {"p_uncond", p_uncond},
            {"items_per_class", items_per_class},
            {"identity_codec", identity_codec},
            {"codec_stride", codec_stride},
            {"codec_channels", codec_channels},
            {"hidden", hidden},
            {"kernel", kernel},
            {"log_every", log_every},
            {"seed", seed}};
  }

  static ToyTrainingConfig from_json(const nlohmann::json& j) {
    ToyTrainingConfig c;
    c.steps = j.value("steps", c.steps);
    c.batch = j.value("batch", c.batch);
    c.crop_frames = j.value("crop_frames", c.crop_frames);
    c.lr = j.value("lr", c.lr);
    c.p_uncond = j.value("p_uncond", c.p_uncond);
    c.items_per_class = j.value("items_per_class", c.items_per_class);
    c.identity_codec = j.value("identity_codec", c.identity_codec);
    c.codec_stride = j.value("codec_stride", c.codec_stride);
    c.codec_channels = j.value("codec_channels", c.codec_channels);
    c.hidden = j.value("hidden", c.hidden);
    c.kernel = j.value("kernel", c.kernel);
    c.log_every = j.value("log_every", c.log_every);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  }
};

struct ToyPriorCheckpoint {
  CorpusSpec corpus;
  ToyTrainingConfig training;
  BlockCodec codec;
  ConvDenoiser denoiser;
  std::vector<double> loss_curve;  // mean training loss per log window
  double initial_eval_mse = 0.0;
  double final_eval_mse = 0.0;

  nlohmann::json to_json() const {
    return {{"format", "audiosds-toy-prior"},
            {"version", 1},
            {"corpus", audiosds::to_json(corpus)},
            {"training", training.to_json()},
            {"codec", codec.to_json()},
            {"denoiser", denoiser.to_json()},
            {"loss_curve", loss_curve},
            {"initial_eval_mse", initial_eval_mse},
            {"final_eval_mse", final_eval_mse}};
  }

  static ToyPriorCheckpoint from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "audiosds-toy-prior") throw ConfigError("not a toy prior checkpoint");
    ToyPriorCheckpoint c;
    c.corpus = corpus_from_json(j.at("corpus"));
    c.training = ToyTrainingConfig::from_json(j.at("training"));
    c.codec = BlockCodec::from_json(j.at("codec"));
    c.denoiser = ConvDenoiser::from_json(j.at("denoiser"));
    c.loss_curve = j.at("loss_curve").get<std::vector<double>>();
    c.initial_eval_mse = j.at("initial_eval_mse").get<double>();
    c.final_eval_mse = j.at("final_eval_mse").get<double>();
    return c;
  }

  std::string serialize() const { return to_json().dump(); }
  std::uint64_t hash() const { return fnv1a64(serialize()); }

  void save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write checkpoint " + path.string());
    f << serialize();
  }

  static ToyPriorCheckpoint load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("toy prior checkpoint not found: " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    try {
      return from_json(nlohmann::json::parse(ss.str()));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed toy prior checkpoint " + path.string() + ": " + e.what());
    }
  }
};

class ToyPrior : public DiffusionPrior {
 public:
  explicit ToyPrior(ToyPriorCheckpoint ckpt) : ckpt_(std::move(ckpt)) {}

  std::string name() const override { return "toy"; }
  PriorInfo info() override { return {ckpt_.codec.channels(), ckpt_.codec.stride(), ckpt_.codec.sample_rate()}; }
  const NoiseSchedule& schedule() override { return schedule_; }

  Latent encode(const Waveform& x) override { return ckpt_.codec.encode(x); }
  Waveform decode(const Latent& h) override { return ckpt_.codec.decode(h); }
  bool has_decoder_vjp() const override { return true; }
  Latent decode_vjp(const Latent& h, const Waveform& cot) override { return ckpt_.codec.decode_vjp(h, cot); }
  bool has_encoder_vjp() const override { return true; }
  Waveform encode_vjp(const Waveform& x, const Latent& cot) override { return ckpt_.codec.encode_vjp(x, cot); }

  Latent predict_noise(const Latent& z, double t, const Conditioning& cond) override {
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidInput("diffusion time must lie in [0, 1]");
    return ckpt_.denoiser.predict(z, t, class_of(cond));
  }

  /// -1 for unconditional.
  int class_of(const Conditioning& cond) const {
    if (cond.class_id) {
      if (*cond.class_id < 0 || static_cast<std::size_t>(*cond.class_id) >= ckpt_.corpus.classes.size())
        throw InvalidInput("class id outside the toy vocabulary");
      return *cond.class_id;
    }
    if (cond.prompt) {
      if (auto c = ckpt_.corpus.class_for_prompt(*cond.prompt)) return *c;
      throw ConfigError("prompt \"" + *cond.prompt + "\" matches no toy prior class");
    }
    return -1;
  }

  const ToyPriorCheckpoint& checkpoint() const { return ckpt_; }

 private:
  ToyPriorCheckpoint ckpt_;
  NoiseSchedule schedule_ = NoiseSchedule::cosine();
};

namespace detail {

struct EvalSet {
  std::vector<Latent> z, eps;
  std::vector<double> t;
  std::vector<int> cls;
};

// Fixed held-out (z, eps, t, class) tuples for before/after comparisons.
inline EvalSet make_eval_set(const CorpusSpec& corpus, const BlockCodec& codec, std::size_t crop, std::uint64_t seed) {
  EvalSet e;
  const auto sched = NoiseSchedule::cosine();
  Rng rng(derive_seed(seed, 0xe7a1));
  for (std::size_t c = 0; c < corpus.classes.size(); ++c)
    for (std::uint64_t i = 0; i < 3; ++i) {
      const auto h = codec.encode(corpus_item(corpus, static_cast<int>(c), kHeldOutIndexBase + i));
      const std::size_t len = std::min(crop, h.frames);
      for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        Latent hc(h.channels, len);
        for (std::size_t ch = 0; ch < h.channels; ++ch)
          for (std::size_t f = 0; f < len; ++f) hc(ch, f) = h(ch, f);
        Latent eps(h.channels, len, gaussian_vector(rng, h.channels * len));
        const auto p = sched.eval(t);
        e.z.push_back(lincomb(p.alpha, hc, p.sigma, eps));
        e.eps.push_back(std::move(eps));
        e.t.push_back(t);
        e.cls.push_back(static_cast<int>(c));
      }
    }
  return e;
}

}  // namespace detail

/// Mean held-out denoising MSE with each example conditioned on
/// `class_shift`-rotated labels (0 = matched class).
inline double eval_denoiser_mse(const ConvDenoiser& net, const CorpusSpec& corpus, const BlockCodec& codec,
                                std::size_t crop, std::uint64_t seed, int class_shift = 0) {
  const auto e = detail::make_eval_set(corpus, codec, crop, seed);
  const int k = static_cast<int>(corpus.classes.size());
  double s = 0.0;
  for (std::size_t i = 0; i < e.z.size(); ++i) s += net.mse(e.z[i], e.eps[i], e.t[i], (e.cls[i] + class_shift) % k);
  return s / static_cast<double>(e.z.size());
}

inline std::vector<Waveform> corpus_pool(const CorpusSpec& corpus, std::size_t per_class, std::vector<int>* labels) {
  std::vector<Waveform> items;
  for (std::size_t c = 0; c < corpus.classes.size(); ++c)
    for (std::uint64_t i = 0; i < per_class; ++i) {
      items.push_back(corpus_item(corpus, static_cast<int>(c), i));
      if (labels) labels->push_back(static_cast<int>(c));
    }
  return items;
}

/// Fits the codec, then trains the noise predictor with Adam on random
/// latent crops, t ~ U[0, 1], and labels dropped with probability p_uncond.
inline ToyPriorCheckpoint train_toy_prior(const CorpusSpec& corpus, const ToyTrainingConfig& cfg) {
  corpus.validate();
  cfg.validate();
  ToyPriorCheckpoint ck;
  ck.corpus = corpus;
  ck.training = cfg;

  std::vector<int> labels;
  const auto items = corpus_pool(corpus, cfg.items_per_class, &labels);
  ck.codec = cfg.identity_codec ? BlockCodec::identity(corpus.sample_rate)
                                : fit_block_codec(items, cfg.codec_stride, cfg.codec_channels);
  std::vector<Latent> latents;
  latents.reserve(items.size());
  for (const auto& x : items) latents.push_back(ck.codec.encode(x));

  DenoiserShape shape{ck.codec.channels(), cfg.hidden, cfg.kernel, cfg.kernel, corpus.classes.size()};
  ck.denoiser = ConvDenoiser(shape);
  Rng init_rng(derive_seed(cfg.seed, 1));
  ck.denoiser.init_random(init_rng);
  ck.initial_eval_mse = eval_denoiser_mse(ck.denoiser, corpus, ck.codec, cfg.crop_frames, cfg.seed);

  const auto sched = NoiseSchedule::cosine();
  Optimizer opt({OptimizerKind::adam, cfg.lr}, ck.denoiser.param_count());
  Rng rng(derive_seed(cfg.seed, 2));
  std::vector<Latent> zs(cfg.batch), eps(cfg.batch);
  std::vector<ConvDenoiser::Example> batch(cfg.batch);
  std::vector<double> grad;
  double window = 0.0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto idx = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(latents.size())));
      const auto& h = latents[std::min(idx, latents.size() - 1)];
      const std::size_t len = std::min(cfg.crop_frames, h.frames);
      const auto start = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(h.frames - len + 1)));
      const double t = uniform(rng, 0.0, 1.0);
      const auto p = sched.eval(t);
      eps[b] = Latent(h.channels, len, gaussian_vector(rng, h.channels * len));
      zs[b] = Latent(h.channels, len);
      for (std::size_t c = 0; c < h.channels; ++c)
        for (std::size_t f = 0; f < len; ++f)
          zs[b](c, f) = p.alpha * h(c, std::min(start + f, h.frames - 1)) + p.sigma * eps[b](c, f);
      const int label = uniform(rng, 0.0, 1.0) < cfg.p_uncond ? -1 : labels[std::min(idx, latents.size() - 1)];
      batch[b] = {&zs[b], &eps[b], t, label};
    }
    const double loss = ck.denoiser.loss_and_grad(batch, grad);
    if (!std::isfinite(loss)) throw TrainingError("toy prior training diverged", step);
    opt.step(ck.denoiser.params(), grad);
    window += loss;
    if ((step + 1) % cfg.log_every == 0) {
      ck.loss_curve.push_back(window / static_cast<double>(cfg.log_every));
      window = 0.0;
    }
  }
  ck.final_eval_mse = eval_denoiser_mse(ck.denoiser, corpus, ck.codec, cfg.crop_frames, cfg.seed);
  return ck;
}

}  // namespace audiosds
