#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "audiosds/prior/oracle.hpp"
#include "audiosds/prior/toy.hpp"
#include "test_support.hpp"

using namespace audiosds;
using audiosds::testing::ClassTargetPrior;
using audiosds::testing::tiny_toy_checkpoint;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Latent random_latent(std::size_t c, std::size_t f, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  return Latent(c, f, gaussian_vector(rng, c * f, scale));
}

double rel_err(const Latent& a, const Latent& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
    den += b.values[i] * b.values[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

}  // namespace

TEST_CASE("cosine schedule endpoints and variance preservation", "[prior][schedule]") {
  const auto s = NoiseSchedule::cosine();
  CHECK(s.alpha(0.0) == 1.0);
  CHECK(s.sigma(0.0) == 0.0);
  CHECK(s.alpha(1.0) == 0.0);
  CHECK(s.sigma(1.0) == 1.0);
  CHECK_THAT(s.alpha(0.5), WithinAbs(std::sqrt(0.5), 1e-15));
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const auto p = s.eval(t);
    CHECK_THAT(p.alpha * p.alpha + p.sigma * p.sigma, WithinAbs(1.0, 1e-14));
  }
  CHECK_THROWS_AS(s.eval(-0.1), InvalidInput);
  CHECK_THROWS_AS(s.eval(1.5), InvalidInput);
}

TEST_CASE("sampled schedule tables interpolate linearly", "[prior][schedule]") {
  const auto t = NoiseSchedule::from_table({{0.0, 1.0, 0.0}, {1.0, 0.0, 1.0}, {0.5, 0.6, 0.8}});
  CHECK(t.is_table());
  CHECK_THAT(t.alpha(0.25), WithinAbs(0.8, 1e-15));
  CHECK_THAT(t.sigma(0.75), WithinAbs(0.9, 1e-15));
  CHECK_THROWS_AS(NoiseSchedule::from_table({{0.0, 1.0, 0.0}}), InvalidInput);
  CHECK_THROWS_AS(NoiseSchedule::from_table({{0.0, 1.0, 0.0}, {0.0, 0.5, 0.5}}), InvalidInput);
  // A table sampled from the cosine schedule stays close to it.
  const auto c = NoiseSchedule::cosine();
  const auto tab = NoiseSchedule::from_table(c.sample(256));
  for (double x : {0.013, 0.4, 0.77}) CHECK_THAT(tab.alpha(x), WithinAbs(c.alpha(x), 1e-4));
}

TEST_CASE("add_noise mixes signal and noise by the schedule", "[prior]") {
  OraclePrior p(100);
  const Latent h(2, 3, 1.0), eps(2, 3, -2.0);
  const auto z0 = p.add_noise(h, 0.0, eps);
  CHECK(z0 == h);
  const auto z1 = p.add_noise(h, 1.0, eps);
  CHECK(z1 == eps);
  const auto zh = p.add_noise(h, 0.5, eps);
  for (double v : zh.values) CHECK_THAT(v, WithinAbs(std::sqrt(0.5) * (1.0 - 2.0), 1e-15));
  CHECK_THROWS_AS(p.add_noise(h, 0.5, Latent(2, 4)), InvalidInput);
}

TEST_CASE("guidance combination algebra", "[prior][cfg]") {
  const auto ec = random_latent(3, 5, 1), eu = random_latent(3, 5, 2);
  CHECK(cfg_combine(ec, eu, 0.0) == eu);
  const auto one = cfg_combine(ec, eu, 1.0);
  for (std::size_t i = 0; i < one.size(); ++i) CHECK_THAT(one.values[i], WithinAbs(ec.values[i], 1e-15));
  // Affine in s: combine(s) = eu + s (ec - eu).
  const auto s7 = cfg_combine(ec, eu, 7.5);
  for (std::size_t i = 0; i < s7.size(); ++i)
    CHECK_THAT(s7.values[i], WithinAbs(eu.values[i] + 7.5 * (ec.values[i] - eu.values[i]), 1e-12));
  // Identical predictions are returned exactly for any scale.
  CHECK(cfg_combine(ec, ec, 60.0) == ec);
  CHECK_THROWS_AS(cfg_combine(ec, eu, -1.0), InvalidInput);
  CHECK_THROWS_AS(cfg_combine(ec, Latent(3, 4), 1.0), InvalidInput);
}

TEST_CASE("oracle predicts the recorded noise and denoising recovers the latent", "[prior][oracle]") {
  for (double t : {0.1, 0.5, 0.9}) {
    for (int n : {1, 2, 5, 10}) {
      OraclePrior p(100);
      const auto h = random_latent(2, 64, 10 + n);
      const auto eps = random_latent(2, 64, 20 + n);
      const auto z = p.add_noise(h, t, eps);
      CHECK(p.predict_noise(z, t, Conditioning::null()) == eps);
      const auto hh = p.denoise_multistep(z, t, Conditioning::label(0), n, 15.0);
      INFO("t=" << t << " n=" << n);
      CHECK(rel_err(hh, h) < 1e-10);
    }
  }
}

TEST_CASE("exact-chain oracle returns the clean latent bit for bit", "[prior][oracle]") {
  OraclePrior p(100, true);
  const auto h = random_latent(2, 32, 3);
  const auto z = p.add_noise(h, 0.7, random_latent(2, 32, 4));
  CHECK(p.denoise_multistep(z, 0.7, Conditioning::null(), 3, 1.0) == h);
  // Off the recorded point it falls back to the DDIM chain.
  auto z2 = z;
  z2.values[0] += 1e-3;
  CHECK_FALSE(p.denoise_multistep(z2, 0.7, Conditioning::null(), 3, 1.0) == h);
}

TEST_CASE("two-step DDIM equals two hand-computed steps on the toy prior", "[prior][ddim]") {
  ToyPrior p(tiny_toy_checkpoint());
  const auto z = random_latent(p.info().latent_channels, 40, 8);
  const auto cond = Conditioning::label(1);
  const double t = 0.8, s = 3.0;
  const auto& sched = p.schedule();
  Latent cur = z;
  for (double ti : {t, t / 2}) {
    const double tn = ti - t / 2;
    const auto ec = p.predict_noise(cur, ti, cond);
    const auto eu = p.predict_noise(cur, ti, Conditioning::null());
    Latent eps = eu.zeros_like();
    for (std::size_t i = 0; i < eps.size(); ++i) eps.values[i] = eu.values[i] + s * (ec.values[i] - eu.values[i]);
    Latent next = eps.zeros_like();
    for (std::size_t i = 0; i < eps.size(); ++i) {
      const double x0 = (cur.values[i] - sched.sigma(ti) * eps.values[i]) / sched.alpha(ti);
      next.values[i] = sched.alpha(tn) * x0 + sched.sigma(tn) * eps.values[i];
    }
    cur = next;
  }
  const auto got = p.denoise_multistep(z, t, cond, 2, s);
  CHECK(rel_err(got, cur) < 1e-12);
  // One step differs from two: the chain really is multistep.
  CHECK(rel_err(p.denoise_multistep(z, t, cond, 1, s), cur) > 1e-6);
  CHECK_THROWS_AS(p.denoise_multistep(z, t, cond, 0, s), InvalidInput);
}

TEST_CASE("block codec reconstructs held-out corpus audio above 20 dB", "[prior][codec]") {
  const auto corpus = traffic_sax_corpus();
  const auto items = corpus_pool(corpus, 16, nullptr);
  const auto codec = fit_block_codec(items, 16, 14);
  for (int c = 0; c < 2; ++c) {
    const auto x = corpus_item(corpus, c, kHeldOutIndexBase + 7);
    const auto y = codec.decode(codec.encode(x));
    const double snr = 10.0 * std::log10(squared_norm(x) / squared_norm(x - y));
    INFO("class " << c << " snr " << snr);
    CHECK(snr >= 20.0);
  }
}

TEST_CASE("codec vjps match finite differences on a 16-frame latent", "[prior][codec][gradient]") {
  const auto& ck = tiny_toy_checkpoint();
  ToyPrior p(ck);
  const auto h = random_latent(p.info().latent_channels, 16, 31, 0.1);
  const auto cot = testing::random_waveform(16 * p.info().compression_factor, p.info().sample_rate, 32);
  const auto g = p.decode_vjp(h, cot);
  auto f = [&](std::span<const double> v) {
    return dot(p.decode(Latent(h.channels, h.frames, std::vector<double>(v.begin(), v.end()))), cot);
  };
  const auto fd = testing::fd_gradient(f, h.values, 1e-4);
  CHECK(testing::max_relative_error(g.values, fd) < 1e-6);

  const auto x = testing::random_waveform(16 * p.info().compression_factor, p.info().sample_rate, 33, 0.1);
  const auto lc = random_latent(h.channels, 16, 34);
  const auto gx = p.encode_vjp(x, lc);
  auto fe = [&](std::span<const double> v) {
    const auto e = p.encode(Waveform::from_flat(v, x.sample_rate()));
    double s = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) s += e.values[i] * lc.values[i];
    return s;
  };
  const auto fdx = testing::fd_gradient(fe, x.flat(), 1e-4);
  CHECK(testing::max_relative_error(gx.flat(), fdx) < 1e-6);
}

TEST_CASE("toy prior training learns and respects class labels", "[prior][toy]") {
  const auto& ck = tiny_toy_checkpoint();
  CHECK(ck.final_eval_mse < 0.5 * ck.initial_eval_mse);
  const double mismatched = eval_denoiser_mse(ck.denoiser, ck.corpus, ck.codec, ck.training.crop_frames, ck.training.seed, 1);
  CHECK(ck.final_eval_mse < mismatched);
  CHECK(ck.loss_curve.size() == ck.training.steps / ck.training.log_every);
  CHECK(ck.loss_curve.back() < ck.loss_curve.front());
}

TEST_CASE("toy prior checkpoints are deterministic and round-trip", "[prior][toy]") {
  ToyTrainingConfig cfg;
  cfg.steps = 20;
  cfg.items_per_class = 4;
  cfg.hidden = 8;
  cfg.log_every = 10;
  const auto a = train_toy_prior(traffic_sax_corpus(), cfg);
  const auto b = train_toy_prior(traffic_sax_corpus(), cfg);
  CHECK(a.hash() == b.hash());
  cfg.seed = 1;
  CHECK(train_toy_prior(traffic_sax_corpus(), cfg).hash() != a.hash());
  const auto back = ToyPriorCheckpoint::from_json(nlohmann::json::parse(a.serialize()));
  CHECK(back.hash() == a.hash());
  CHECK_THROWS_AS(ToyPriorCheckpoint::from_json({{"format", "other"}}), ConfigError);
}

TEST_CASE("toy prior maps prompts to classes and rejects unknown ones", "[prior][toy]") {
  ToyPrior p(tiny_toy_checkpoint());
  CHECK(p.class_of(Conditioning::text("busy traffic at night")) == 0);
  CHECK(p.class_of(Conditioning::text("a saxophone solo")) == 1);
  CHECK(p.class_of(Conditioning::null()) == -1);
  CHECK_THROWS_AS(p.class_of(Conditioning::text("birdsong")), ConfigError);
  CHECK_THROWS_AS(p.class_of(Conditioning::label(7)), InvalidInput);
}

TEST_CASE("class-target test prior denoises each class to its target", "[prior]") {
  const auto a = testing::random_waveform(32, 100, 1), b = testing::random_waveform(32, 100, 2);
  ClassTargetPrior p({a, b});
  const auto z = p.add_noise(p.encode(a), 0.5, random_latent(2, 32, 3));
  CHECK(p.decode(p.denoise_multistep(z, 0.5, Conditioning::label(1), 2, 1.0)).flat()[5] == b.flat()[5]);
}
