#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "audiosds/render/fm.hpp"
#include "audiosds/render/impact.hpp"
#include "test_support.hpp"

using namespace audiosds;
using namespace audiosds::testing;

namespace {

constexpr int kSr = 8000;

RenderSpec spec_of(std::size_t frames) { return {static_cast<double>(frames) / kSr, kSr}; }

// Straight-loop evaluation of the FM recurrence, written independently of the
// library: explicit u[n-1] buffer, mapping functions spelled out.
std::vector<double> fm_reference(const FMParams& p, std::size_t frames, int sr) {
  const std::size_t v = p.operators;
  std::vector<double> prev(v, 0.0), cur(v), x(frames);
  for (std::size_t n = 0; n < frames; ++n) {
    const double t = double(n) / sr;
    double out = 0.0;
    for (std::size_t j = 0; j < v; ++j) out += std::exp(p.log_fm_matrix[v * v + j]) * prev[j];
    x[n] = out;
    for (std::size_t k = 0; k < v; ++k) {
      double mod = 0.0;
      for (std::size_t j = 0; j < v; ++j) mod += std::exp(p.log_fm_matrix[k * v + j]) * prev[j];
      const double a = 1.0 / (1.0 + std::exp(-p.raw_attacks[k]));
      const double d = 1.0 / (1.0 + std::exp(-p.raw_decays[k]));
      const double hz = 20.0 * std::pow(400.0, 1.0 / (1.0 + std::exp(-p.raw_ratios[k])));
      const double env = std::max(0.0, std::min(t / (a + 1e-5), std::exp(a - t) / (d * d)) * (d - t - a) / d);
      cur[k] = std::sin(t * 2.0 * std::numbers::pi * hz + mod) * env;
    }
    prev = cur;
  }
  return x;
}

FMParams random_fm(std::size_t v, std::uint64_t seed) {
  Rng rng(seed);
  FMParams p = FMParams::zeros(v);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& x : p.log_fm_matrix) x = -1.0 + 0.5 * n(rng);
  for (auto& x : p.raw_ratios) x = n(rng);
  // Short attacks and long decays keep the envelope away from its zero region.
  for (auto& x : p.raw_attacks) x = -4.0 + 0.5 * n(rng);
  for (auto& x : p.raw_decays) x = 1.0 + 0.5 * n(rng);
  return p;
}

std::vector<double> naive_convolve(std::span<const double> a, std::span<const double> b, std::size_t len) {
  std::vector<double> out(len, 0.0);
  for (std::size_t n = 0; n < len; ++n)
    for (std::size_t k = 0; k <= n; ++k)
      if (k < a.size() && n - k < b.size()) out[n] += a[k] * b[n - k];
  return out;
}

template <class R>
double projected(const R& r, std::span<const double> theta, const Waveform& cot) {
  return dot(cot, r.render(theta));
}

}  // namespace

TEST_CASE("envelope matches direct evaluation and edge cases", "[render]") {
  CHECK(envelope(0.0, 0.3, 0.6) == 0.0);
  CHECK(envelope(0.95, 0.3, 0.6) == 0.0);
  CHECK(envelope(2.0, 0.3, 0.6) == 0.0);
  const double a = 0.1, d = 0.5, t = 0.05;
  const double direct = std::max(0.0, std::min(t / (a + 1e-5), std::exp(a - t) / (d * d)) * (d - t - a) / d);
  CHECK(envelope(t, a, d) == Catch::Approx(direct).epsilon(1e-15));
  CHECK(direct == Catch::Approx(0.05 / 0.10001 * 0.35 / 0.5).epsilon(1e-12));

  for (double tt : {0.01, 0.05, 0.2, 0.3}) {
    for (auto [aa, dd] : {std::pair{0.1, 0.5}, std::pair{0.05, 0.8}, std::pair{0.02, 0.3}}) {
      const auto e = envelope_with_grad(tt, aa, dd);
      const double h = 1e-7;
      const double fa = (envelope(tt, aa + h, dd) - envelope(tt, aa - h, dd)) / (2 * h);
      const double fd = (envelope(tt, aa, dd + h) - envelope(tt, aa, dd - h)) / (2 * h);
      CHECK(e.d_attack == Catch::Approx(fa).epsilon(1e-5).margin(1e-6));
      CHECK(e.d_decay == Catch::Approx(fd).epsilon(1e-5).margin(1e-6));
    }
  }
}

TEST_CASE("fm render matches an independent recurrence", "[render]") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = random_fm(4, seed);
    const auto w = fm_render(p, spec_of(64));
    const auto ref = fm_reference(p, 64, kSr);
    REQUIRE(w.frames() == 64);
    for (std::size_t n = 0; n < 64; ++n) {
      CHECK(w(0, n) == Catch::Approx(ref[n]).margin(1e-12));
      CHECK(w(1, n) == w(0, n));
    }
  }
}

TEST_CASE("fm without modulation reduces to a delayed enveloped sinusoid", "[render]") {
  FMParams p = FMParams::zeros(4);
  for (auto& x : p.log_fm_matrix) x = -50.0;
  p.log_fm_matrix[16] = 0.0;  // output row [1, 0, 0, 0]
  p.raw_ratios = {0.3, -0.2, 0.1, 0.0};
  p.raw_attacks = {logit(0.05), 0.0, 0.0, 0.0};
  p.raw_decays = {logit(0.8), 0.0, 0.0, 0.0};
  const RenderSpec spec{0.25, kSr};
  const auto w = fm_render(p, spec);
  const double omega = p.angular_frequency(0);
  CHECK(w(0, 0) == 0.0);
  for (std::size_t n = 1; n < spec.frames(); ++n) {
    const double t = double(n - 1) / kSr;
    CHECK(w(0, n) == Catch::Approx(std::sin(t * omega) * envelope(t, 0.05, 0.8)).margin(1e-6));
  }

  // Output-row gradient is the inner product of the cotangent with the
  // delayed operator states (times the exp chain factor).
  const auto cot = random_waveform(spec.frames(), kSr, 7);
  const auto g = fm_vjp(p, spec, cot);
  const auto gy = cot.channel_sum();
  for (std::size_t j = 0; j < 4; ++j) {
    const double omega_j = p.angular_frequency(j);
    double expect = 0.0;
    for (std::size_t n = 1; n < spec.frames(); ++n) {
      const double t = double(n - 1) / kSr;
      expect += gy[n] * std::sin(t * omega_j) * envelope(t, p.attack(j), p.decay(j));
    }
    expect *= std::exp(p.log_fm_matrix[16 + j]);
    CHECK(g.log_fm_matrix[16 + j] == Catch::Approx(expect).epsilon(1e-8).margin(1e-20));
  }
}

TEST_CASE("fm output vanishes after the envelope support", "[render]") {
  FMParams p = random_fm(3, 11);
  for (auto& x : p.raw_attacks) x = logit(0.01);
  for (auto& x : p.raw_decays) x = logit(0.02);
  const RenderSpec spec{0.1, kSr};
  const auto w = fm_render(p, spec);
  // Envelopes are zero for t >= alpha + delta = 0.03 s; output lags one sample.
  for (std::size_t n = 0.03 * kSr + 2; n < spec.frames(); ++n) CHECK(w(0, n) == 0.0);
}

TEST_CASE("fm vjp matches finite differences", "[render][gradient]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t v = 1 + seed % 4;
    const std::size_t frames = 32 + 32 * (seed % 7);
    FmRenderer r(v, spec_of(frames));
    const auto theta = random_fm(v, 100 + seed).pack();
    const auto cot = random_waveform(frames, kSr, 200 + seed);
    const auto grad = r.vjp(theta, cot);
    const auto fd = fd_gradient5([&](std::span<const double> th) { return projected(r, th, cot); }, theta, 1e-6);
    INFO("seed " << seed << " V " << v << " T " << frames);
    CHECK(max_relative_error(grad, fd) <= 1e-4);
  }
}

TEST_CASE("fm vjp of zero cotangent is zero", "[render]") {
  FmRenderer r(2, spec_of(32));
  const auto theta = random_fm(2, 3).pack();
  const auto g = r.vjp(theta, Waveform(32, kSr));
  for (double x : g) CHECK(x == 0.0);
}

TEST_CASE("fm initialisation and errors", "[render]") {
  Rng rng(1);
  const auto p = fm_initial_params(4, rng);
  CHECK(p.fm(4, 0) == Catch::Approx(1.0).epsilon(0.05));
  for (std::size_t j = 1; j < 4; ++j) CHECK(p.fm(4, j) < 1e-3);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(p.attack(j) > 0.0);
    CHECK(p.attack(j) < 1.0);
    CHECK(p.decay(j) > p.attack(j));
  }
  FMParams bad = p;
  bad.log_fm_matrix[0] = 800.0;
  CHECK_THROWS_AS(fm_render(bad, spec_of(32)), NumericError);
  bad = p;
  bad.raw_ratios[1] = std::nan("");
  CHECK_THROWS_AS(fm_render(bad, spec_of(32)), InvalidInput);
  CHECK_THROWS_AS(FMParams::unpack(std::vector<double>(5), 4), InvalidInput);
}

TEST_CASE("fm rendering is deterministic", "[render]") {
  FmRenderer r(4, spec_of(256));
  const auto theta = random_fm(4, 9).pack();
  CHECK(r.render(theta) == r.render(theta));
}

TEST_CASE("fft convolution agrees with the direct sum", "[render]") {
  Rng rng(5);
  const auto a = gaussian_vector(rng, 64);
  const auto b = gaussian_vector(rng, 64);
  const auto ab = fft_convolve(a, b);
  const auto ba = fft_convolve(b, a);
  const auto ref = naive_convolve(a, b, 127);
  for (std::size_t i = 0; i < 127; ++i) {
    CHECK(ab[i] == Catch::Approx(ref[i]).margin(1e-6));
    CHECK(ab[i] == Catch::Approx(ba[i]).margin(1e-6));
  }
  std::vector<double> delta(10, 0.0);
  delta[0] = 1.0;
  const auto same = fft_convolve(a, delta, a.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(same[i] == Catch::Approx(a[i]).margin(1e-12));
}

TEST_CASE("bandpass shapes a flat spectrum into the Gaussian window", "[render]") {
  const std::size_t n = 512;
  std::vector<double> delta(n, 0.0);
  delta[0] = 1.0;  // flat spectrum
  const double center = 2.0 * std::numbers::pi * 1000.0;
  const auto y = bandpass(delta, center, 0.1, kSr);
  auto spec = real_fft(n).forward(y);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double omega = 2.0 * std::numbers::pi * kSr * double(k) / double(n);
    const double q = (omega - center) / (0.1 * center);
    CHECK(std::abs(spec[k]) == Catch::Approx(std::exp(-0.5 * q * q)).margin(1e-6));
  }
  CHECK_THROWS_AS(bandpass(delta, 10.0 * std::numbers::pi * kSr, 0.1, kSr), InvalidInput);
  CHECK_THROWS_AS(bandpass(delta, -1.0, 0.1, kSr), InvalidInput);

  Rng rng(2);
  const auto noise = gaussian_vector(rng, n);
  const auto wide = bandpass(noise, center, 1e6, kSr);
  CHECK(relative_l2(wide, noise) < 1e-6);
}

TEST_CASE("impact with a delta reverb and one undamped mode is a cosine", "[render]") {
  ImpactParams p = ImpactParams::zeros(1);
  p.amplitudes = {1.0};
  p.frequencies = {2.0 * std::numbers::pi * 440.0};
  p.reverb_amplitudes = {1.0};
  p.reverb_centers = {1.0};
  ImpactOptions opt;
  opt.excitation = ReverbExcitation::impulse;
  opt.identity_filter = true;
  const auto w = impact_render(p, spec_of(400), opt);
  for (std::size_t n = 0; n < 400; ++n) {
    CHECK(w(0, n) == Catch::Approx(std::cos(p.frequencies[0] * n / kSr)).margin(1e-9));
    CHECK(w(1, n) == w(0, n));
  }

  // Linear case: the amplitude gradient is <cotangent, cos(lambda t)>.
  const auto cot = random_waveform(400, kSr, 4);
  const auto g = impact_vjp(p, spec_of(400), cot, opt);
  const auto gy = cot.channel_sum();
  double expect = 0.0;
  for (std::size_t n = 0; n < 400; ++n) expect += gy[n] * std::cos(p.frequencies[0] * n / kSr);
  CHECK(g.amplitudes[0] == Catch::Approx(expect).epsilon(1e-9));
}

TEST_CASE("impact render matches a direct time-domain convolution", "[render]") {
  Rng rng(3);
  ImpactParams p = ImpactParams::zeros(4, 77);
  for (std::size_t m = 0; m < 4; ++m) {
    p.amplitudes[m] = uniform(rng, -1, 1);
    p.dampings[m] = uniform(rng, 0, 200);
    p.frequencies[m] = uniform(rng, 500, 20000);
    p.reverb_amplitudes[m] = uniform(rng, -1, 1);
    p.reverb_dampings[m] = uniform(rng, 0, 200);
    p.reverb_centers[m] = uniform(rng, 1000, 20000);
  }
  const std::size_t t_len = 256;
  const auto w = impact_render(p, spec_of(t_len));

  const auto noise = reverb_excitation(t_len, 77, ReverbExcitation::noise);
  std::vector<double> obj(t_len, 0.0), rev(t_len, 0.0);
  for (std::size_t m = 0; m < 4; ++m) {
    const auto band = bandpass(noise, p.reverb_centers[m], 0.05, kSr);
    for (std::size_t n = 0; n < t_len; ++n) {
      const double t = double(n) / kSr;
      obj[n] += p.amplitudes[m] * std::exp(-p.dampings[m] * t) * std::cos(p.frequencies[m] * t);
      rev[n] += p.reverb_amplitudes[m] * std::exp(-p.reverb_dampings[m] * t) * band[n];
    }
  }
  const auto ref = naive_convolve(obj, rev, t_len);
  for (std::size_t n = 0; n < t_len; ++n) CHECK(w(0, n) == Catch::Approx(ref[n]).margin(1e-5));

  ImpactParams zero = p;
  std::fill(zero.amplitudes.begin(), zero.amplitudes.end(), 0.0);
  std::fill(zero.reverb_amplitudes.begin(), zero.reverb_amplitudes.end(), 0.0);
  CHECK(squared_norm(impact_render(zero, spec_of(t_len))) == 0.0);
}

TEST_CASE("impact vjp matches finite differences", "[render][gradient]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t modes = 1 + seed % 8;
    const std::size_t frames = 64 + 32 * (seed % 6);
    ImpactRenderer r(modes, spec_of(frames), 900 + seed);
    Rng rng(seed);
    auto theta = r.initial_params(rng, FrequencySpacing::linear, 100.0, 3500.0);
    // Dampings large enough to matter over a few milliseconds.
    for (std::size_t i = 0; i < modes; ++i) {
      theta[modes + i] = std::log(uniform(rng, 50.0, 400.0));
      theta[4 * modes + i] = std::log(uniform(rng, 50.0, 400.0));
      theta[2 * modes + i] += uniform(rng, -0.5, 0.5);
      theta[5 * modes + i] += uniform(rng, -0.5, 0.5);
    }
    const auto cot = random_waveform(frames, kSr, 300 + seed);
    const auto grad = r.vjp(theta, cot);
    const auto fd = fd_gradient5([&](std::span<const double> th) { return projected(r, th, cot); }, theta, 1e-6);
    INFO("seed " << seed << " N " << modes << " T " << frames);
    CHECK(max_relative_error(grad, fd) <= 1e-4);
  }
}

TEST_CASE("impact vjp of zero cotangent is zero and rendering is deterministic", "[render]") {
  ImpactRenderer r(3, spec_of(128), 5);
  Rng rng(8);
  const auto theta = r.initial_params(rng);
  for (double x : r.vjp(theta, Waveform(128, kSr))) CHECK(x == 0.0);
  CHECK(r.render(theta) == r.render(theta));
  ImpactRenderer other_seed(3, spec_of(128), 6);
  CHECK_FALSE(other_seed.render(theta) == r.render(theta));
}

TEST_CASE("impact frequency initialisation is linear with tiny perturbation", "[render]") {
  ImpactRenderer r(2048, RenderSpec{0.1, 44100}, 1);
  Rng rng(0);
  const auto theta = r.initial_params(rng);
  const auto p = r.physical(theta);
  const double to_hz = 1.0 / (2.0 * std::numbers::pi);
  CHECK(p.frequencies.front() * to_hz == Catch::Approx(100.0).epsilon(1e-3));
  CHECK(p.frequencies.back() * to_hz == Catch::Approx(18000.0).epsilon(1e-3));
  const double step = (18000.0 - 100.0) / 2047.0;
  for (std::size_t i = 1; i < 2048; i += 97)
    CHECK(p.frequencies[i] * to_hz == Catch::Approx(100.0 + step * i).epsilon(1e-3));

  Rng rng2(0);
  const auto log_theta = r.initial_params(rng2, FrequencySpacing::log);
  const auto lp = r.physical(log_theta);
  CHECK(lp.frequencies[1024] * to_hz < p.frequencies[1024] * to_hz);

  ImpactParams bad = p;
  bad.dampings[0] = -1.0;
  CHECK_THROWS_AS(impact_render(bad, RenderSpec{0.1, 44100}), InvalidInput);
}
