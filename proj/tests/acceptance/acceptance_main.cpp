// Acceptance suite: one PASS/FAIL line per criterion with its runtime and
// the measured values. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/protocol_cases.hpp"
#include "../unit/test_support.hpp"
#include "audiosds/app/config.hpp"
#include "audiosds/app/fixtures.hpp"
#include "audiosds/app/run.hpp"
#include "audiosds/bridge/server.hpp"
#include "audiosds/render/fm.hpp"
#include "audiosds/render/impact.hpp"
#include "audiosds/sds/engine.hpp"
#include "audiosds/sds/optimize.hpp"

namespace {

using namespace audiosds;
using testing::fd_gradient5;
using testing::max_relative_error;
using testing::random_waveform;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int g_failures = 0;

void criterion(const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs >= limit_s) {
    o.pass = false;
    o.detail += "; over the time limit";
  }
  if (!o.pass) ++g_failures;
  std::printf("%s %-22s %8.1f s (limit %.0f s)  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs, limit_s,
              o.detail.c_str());
  std::fflush(stdout);
}

void info(const std::string& name, const std::string& detail) {
  std::printf("INFO %-22s %s\n", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("audiosds_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

template <class R>
double projected(const R& r, std::span<const double> theta, const Waveform& cot) {
  return dot(cot, r.render(theta));
}

// ---- gradient correctness ----

Outcome gradients() {
  constexpr int kSr = 8000;
  constexpr std::uint64_t kSeeds = 20;
  double fm_worst = 0.0, impact_worst = 0.0, spec_worst = 0.0;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const std::size_t v = 1 + seed % 4;
    const std::size_t frames = 32 + 32 * (seed % 8);
    FmRenderer r(v, {static_cast<double>(frames) / kSr, kSr});
    Rng rng(100 + seed);
    FMParams p = FMParams::zeros(v);
    for (auto& x : p.log_fm_matrix) x = -1.0 + 0.5 * n01(rng);
    for (auto& x : p.raw_ratios) x = n01(rng);
    for (auto& x : p.raw_attacks) x = -4.0 + 0.5 * n01(rng);
    for (auto& x : p.raw_decays) x = 1.0 + 0.5 * n01(rng);
    const auto theta = p.pack();
    const auto cot = random_waveform(frames, kSr, 200 + seed);
    const auto fd = fd_gradient5([&](std::span<const double> th) { return projected(r, th, cot); }, theta, 1e-6);
    fm_worst = std::max(fm_worst, max_relative_error(r.vjp(theta, cot), fd));
  }
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const std::size_t modes = 1 + seed % 8;
    const std::size_t frames = 64 + 32 * (seed % 7);
    ImpactRenderer r(modes, {static_cast<double>(frames) / kSr, kSr}, 900 + seed);
    Rng rng(seed);
    auto theta = r.initial_params(rng, FrequencySpacing::linear, 100.0, 3500.0);
    for (std::size_t i = 0; i < modes; ++i) {
      theta[modes + i] = std::log(uniform(rng, 50.0, 400.0));
      theta[4 * modes + i] = std::log(uniform(rng, 50.0, 400.0));
      theta[2 * modes + i] += uniform(rng, -0.5, 0.5);
      theta[5 * modes + i] += uniform(rng, -0.5, 0.5);
    }
    const auto cot = random_waveform(frames, kSr, 300 + seed);
    const auto fd = fd_gradient5([&](std::span<const double> th) { return projected(r, th, cot); }, theta, 1e-6);
    impact_worst = std::max(impact_worst, max_relative_error(r.vjp(theta, cot), fd));
  }
  SpectrogramConfig sc{{16, 32, 64}, 0.25};
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const std::size_t frames = 64 + 48 * (seed % 5);
    const auto w = random_waveform(frames, kSr, 400 + seed);
    auto y = multiscale_spectrogram(w, sc);
    Rng rng(500 + seed);
    for (auto& g : y.scales) g.values = gaussian_vector(rng, g.values.size());
    const auto analytic = multiscale_vjp(w, y, sc);
    // |X| has a kink at X = 0 and |dX/dw_n| <= 1 under a Hann window, so a
    // step well below the smallest magnitude keeps the stencil on the smooth
    // side. Random inputs occasionally put a bin within 1e-5 of zero.
    double min_mag = std::numeric_limits<double>::infinity();
    for (const auto& g : multiscale_spectrogram(w, sc).scales)
      for (double m : g.values) min_mag = std::min(min_mag, m);
    const double h = std::min(1e-5, 1e-2 * min_mag);
    const auto fd = fd_gradient5(
        [&](std::span<const double> x) { return multiscale_spectrogram(Waveform::from_flat(x, kSr), sc).inner(y); },
        w.flat(), h);
    spec_worst = std::max(spec_worst, max_relative_error(analytic.flat(), fd));
  }
  const double tol = 1e-4;
  return {fm_worst <= tol && impact_worst <= tol && spec_worst <= tol,
          "max rel err over 20 seeds: fm " + fmt("%.2e", fm_worst) + ", impact " + fmt("%.2e", impact_worst) +
              ", multiscale " + fmt("%.2e", spec_worst) + " (tol 1e-4)"};
}

// ---- adjoint identity ----

// Exact JVP of the magnitude map from a brute-force DFT, independent of
// the library's FFT: d|X| = Re(conj(X) dX) / |X|.
SpectrogramStack magnitude_jvp(const Waveform& w, const Waveform& d, const SpectrogramConfig& cfg) {
  auto out = multiscale_spectrogram(w, cfg);
  for (std::size_t s = 0; s < cfg.window_sizes.size(); ++s) {
    auto& g = out.scales[s];
    const std::size_t n = cfg.window_sizes[s], hop = cfg.hop(n);
    std::vector<double> hann(n);
    for (std::size_t i = 0; i < n; ++i) hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    for (std::size_t c = 0; c < Waveform::kChannels; ++c) {
      const auto x = w.channel(c), dx = d.channel(c);
      for (std::size_t f = 0; f < g.frames; ++f) {
        for (std::size_t k = 0; k < g.bins; ++k) {
          std::complex<double> X = 0.0, D = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t m = f * hop + i;
            if (m >= x.size()) break;
            const auto e = std::polar(hann[i], -2.0 * std::numbers::pi * static_cast<double>(k * i) / n);
            X += x[m] * e;
            D += dx[m] * e;
          }
          const double mag = std::abs(X);
          g.at(c, f, k) = mag > 0.0 ? (std::conj(X) * D).real() / mag : 0.0;
        }
      }
    }
  }
  return out;
}

Outcome adjoint() {
  SpectrogramConfig cfg{{16, 32, 64}, 0.25};
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t frames = 48 + 16 * (seed % 8);
    const auto w = random_waveform(frames, 8000, 1000 + seed);
    const auto delta = random_waveform(frames, 8000, 2000 + seed);
    auto y = multiscale_spectrogram(w, cfg);
    Rng rng(3000 + seed);
    for (auto& g : y.scales) g.values = gaussian_vector(rng, g.values.size());
    const auto jd = magnitude_jvp(w, delta, cfg);
    const double lhs = jd.inner(y);
    const double rhs = dot(delta.flat(), multiscale_vjp(w, y, cfg).flat());
    const double scale = std::sqrt(jd.squared_norm() * y.squared_norm());
    worst = std::max(worst, std::abs(lhs - rhs) / scale);
  }
  return {worst <= 1e-6, "max |<Jd,y> - <d,J'y>| / (|Jd||y|) over 50 triples: " + fmt("%.2e", worst) + " (tol 1e-6)"};
}

// ---- oracle fixed points ----

Outcome oracle_fixed_points() {
  constexpr int kRate = 8000;
  double worst_grad = 0.0, worst_recover = 0.0;
  std::size_t cases = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto x = random_waveform(128, kRate, 10 + seed, 0.3);
    IdentityRenderer r(x.frames(), kRate);
    const std::vector<double> theta(x.flat().begin(), x.flat().end());
    const double scale = norm(x);
    for (auto v : {SdsVariant::classic, SdsVariant::decoder, SdsVariant::spec_decoder}) {
      for (double t : {0.1, 0.5, 0.9}) {
        for (int n : {1, 2, 5, 10}) {
          OraclePrior prior(kRate);
          SdsConfig c;
          c.variant = v;
          c.batch_size = 3;
          c.t_min = c.t_max = t;
          c.n_denoise_steps = n;
          c.guidance_scale = 15.0;
          c.spectrogram.window_sizes = {16, 32};
          c.seed = seed;
          const auto rep = sds_update(theta, r, prior, Conditioning::label(0), c, 7);
          worst_grad = std::max(worst_grad, norm(std::span<const double>(rep.gradient)) / scale);
          ++cases;
        }
      }
    }
  }
  for (double t : {0.1, 0.5, 0.9}) {
    for (int n : {1, 2, 5, 10}) {
      OraclePrior p(kRate);
      Rng rng(static_cast<std::uint64_t>(100 * t) + n);
      const Latent h(2, 64, gaussian_vector(rng, 128));
      const Latent eps(2, 64, gaussian_vector(rng, 128));
      const auto hh = p.denoise_multistep(p.add_noise(h, t, eps), t, Conditioning::label(0), n, 15.0);
      worst_recover = std::max(worst_recover, testing::relative_l2(hh.values, h.values));
    }
  }
  return {worst_grad <= 1e-6 && worst_recover <= 1e-10,
          std::to_string(cases) + " variant/t/n cases: max |g|/|x| " + fmt("%.2e", worst_grad) +
              " (tol 1e-6); denoise recovery max rel err " + fmt("%.2e", worst_recover) + " (tol 1e-10)"};
}

// ---- convergence toy ----

Outcome convergence() {
  const auto target = random_waveform(256, 8000, 30);
  FrozenTargetPrior prior(target);
  IdentityRenderer r(256, 8000);
  SynthesisConfig sc;
  sc.sds.variant = SdsVariant::decoder;
  sc.sds.batch_size = 1;
  sc.sds.t_min = 0.2;
  sc.sds.t_max = 0.9;
  sc.sds.seed = 1;
  sc.optimizer = {OptimizerKind::sgd, 0.1};
  sc.steps = 200;
  sc.log_every = 200;
  const auto res = optimize_synthesis(std::vector<double>(r.num_params(), 0.0), r, prior, Conditioning::null(), sc);
  const double err = norm(r.render(res.theta) - target);
  return {err < 1e-3, "||x - x*|| after 200 steps: " + fmt("%.2e", err) + " (from " + fmt("%.2f", norm(target)) +
                          ", tol 1e-3)"};
}

// ---- toy separation ----

struct SharedPrior {
  fs::path checkpoint_path;
  std::unique_ptr<ToyPriorCheckpoint> checkpoint;
};

SharedPrior g_prior;

double band_fraction(const Waveform& w, double lo, double hi) {
  const auto x = w.channel(0);
  auto& fft = real_fft(next_pow2(x.size()));
  std::vector<double> buf(fft.size(), 0.0);
  std::copy(x.begin(), x.end(), buf.begin());
  const auto spec = fft.forward(buf);
  double in = 0.0, all = 0.0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double hz = static_cast<double>(k) * w.sample_rate() / static_cast<double>(buf.size());
    const double e = std::norm(spec[k]);
    all += e;
    if (hz >= lo && hz <= hi) in += e;
  }
  return all > 0.0 ? in / all : 0.0;
}

Outcome toy_separation() {
  const auto corpus = traffic_sax_corpus();
  ToyTrainingConfig tc;
  auto ck = train_toy_prior(corpus, tc);
  const auto dir = scratch("prior");
  g_prior.checkpoint_path = dir / "toy_prior.json";
  ck.save(g_prior.checkpoint_path);
  g_prior.checkpoint = std::make_unique<ToyPriorCheckpoint>(std::move(ck));
  info("toy-prior", "trained " + std::to_string(tc.steps) + " steps: held-out denoising mse " +
                        fmt("%.3f", g_prior.checkpoint->final_eval_mse));

  ToyPrior prior(*g_prior.checkpoint);
  app::ToySeparationFixture f;
  auto c = app::make_toy_separation(corpus, f);
  const auto res = optimize_separation(c.problem, prior);
  const auto base = baseline_assignment(c.problem.mixture, 2);
  const double before = app::mean_si_sdr(c.references, base);
  const double after = app::mean_si_sdr(c.references, res.sources);
  const double mix = si_sdr(c.problem.mixture, app::sum_sources(res.sources));
  std::string per;
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& cls = corpus.classes[k];
    per += (k ? ", " : "") + cls.name + " " + fmt("%.2f", si_sdr(c.references[k], res.sources[k])) + " dB";
    info("band-energy", cls.name + " estimate has " + fmt("%.1f", 100.0 * band_fraction(res.sources[k], cls.lo_hz, cls.hi_hz)) +
                            "% of its energy in " + fmt("%.0f", cls.lo_hz) + "-" + fmt("%.0f", cls.hi_hz) +
                            " Hz (reference " +
                            fmt("%.1f", 100.0 * band_fraction(c.references[k], cls.lo_hz, cls.hi_hz)) + "%)");
  }
  const double gain = after - before;
  return {gain >= 3.0 && mix >= 8.0,
          "mean source SI-SDR " + fmt("%.2f", before) + " -> " + fmt("%.2f", after) + " dB (+" + fmt("%.2f", gain) +
              ", need >= 3) [" + per + "]; mixture " + fmt("%.2f", mix) + " dB (need >= 8)"};
}

// ---- ablations ----

Outcome ablations() {
  if (!g_prior.checkpoint) return {false, "toy prior unavailable (toy separation did not train one)"};
  bool ok = true;
  std::string detail = "(a)";
  for (std::uint64_t seed : {0, 1}) {
    app::ImpactFitFixture f;
    f.seed = seed;
    const auto arms = app::ablate_spectrogram_vs_l2(f);
    const double l2 = arms[0].metrics["spectral_loss"].get<double>();
    const double spec = arms[1].metrics["spectral_loss"].get<double>();
    ok = ok && spec < l2;
    detail += " seed " + std::to_string(seed) + ": spectral loss spectrogram " + fmt("%.3g", spec) + " vs l2 " +
              fmt("%.3g", l2) + ";";
  }
  ToyPrior prior(*g_prior.checkpoint);
  app::ToySeparationFixture f;
  const auto arms = app::ablate_denoise_steps(prior, g_prior.checkpoint->corpus, f, 5);
  const double one = arms[0].metrics["objective"].get<double>();
  const double five = arms[1].metrics["objective"].get<double>();
  ok = ok && five <= one;
  detail += " (b) objective 5-step " + fmt("%.4g", five) + " vs 1-step " + fmt("%.4g", one) + " (mean source SI-SDR " +
            fmt("%.2f", arms[1].metrics["mean_source_si_sdr"].get<double>()) + " vs " +
            fmt("%.2f", arms[0].metrics["mean_source_si_sdr"].get<double>()) + " dB)";
  return {ok, detail};
}

// ---- determinism ----

Outcome determinism() {
  if (!g_prior.checkpoint) return {false, "toy prior unavailable (toy separation did not train one)"};
  const auto dir = scratch("determinism");
  const std::vector<std::string> files = {"config.json", "run.log", "metrics.csv", "summary.json"};
  std::size_t compared = 0;
  std::string mismatch;

  auto replay = [&](const std::string& name, const nlohmann::json& overrides, const std::optional<fs::path>& file,
                    std::vector<std::string> extra) {
    auto o = overrides;
    o["out"] = (dir / (name + "_a")).string();
    app::run(app::load_config(file, o));
    app::run(app::load_config(dir / (name + "_a") / "config.json", {{"out", (dir / (name + "_b")).string()}}));
    extra.insert(extra.end(), files.begin(), files.end());
    for (const auto& f : extra) {
      ++compared;
      auto x = slurp(dir / (name + "_a") / f), y = slurp(dir / (name + "_b") / f);
      if (f == "config.json") {
        // The replay only changes "out"; everything else must match exactly.
        auto jx = nlohmann::json::parse(x), jy = nlohmann::json::parse(y);
        jx.erase("out");
        jy.erase("out");
        x = jx.dump();
        y = jy.dump();
      }
      if (x != y) mismatch += " " + name + "/" + f;
    }
  };

  replay("synth_fm",
         {{"task", "synth-fm"},
          {"checkpoint", g_prior.checkpoint_path.string()},
          {"class_id", 1},
          {"steps", 20},
          {"checkpoint_every", 10},
          {"clip", {{"duration", 0.5}}},
          {"sds", {{"batch_size", 2}, {"window_sizes", {256, 512}}}}},
         std::nullopt, {"checkpoints/step_000010.params", "checkpoints/final.params", "audio/final.wav"});

  app::ToySeparationFixture f;
  f.frames = 2048;
  app::write_toy_mixture(g_prior.checkpoint_path, f, dir / "mixture");
  replay("separate", {{"steps", 10}, {"sds", {{"batch_size", 2}}}}, dir / "mixture/separate.json",
         {"checkpoints/final_source1.params", "checkpoints/final_source2.params", "report.csv", "audio/source_1.wav"});

  return {mismatch.empty(), mismatch.empty() ? std::to_string(compared) +
                                                   " artifacts byte-identical across replays of synth-fm and separate"
                                             : "differing:" + mismatch};
}

// ---- protocol conformance ----

Outcome protocol() {
  bridge::LoopbackServer server;
  std::size_t ok = 0, total = 0;
  std::string bad;
  for (const auto& c : testing::protocol_cases()) {
    const auto req = slurp(fs::path(AUDIOSDS_FIXTURE_DIR) / "protocol" / (c.name + ".request.bin"));
    const auto want = slurp(fs::path(AUDIOSDS_FIXTURE_DIR) / "protocol" / (c.name + ".response.bin"));
    ++total;
    const bool encoder_ok = bridge::frame_json(c.request) == req;
    boost::asio::io_context io;
    bridge::tcp::socket s(io);
    s.connect(bridge::tcp::endpoint(boost::asio::ip::make_address("127.0.0.1"), server.port()));
    bridge::write_bytes(s, req);
    const auto body = bridge::read_frame(s);
    const bool reply_ok = body && bridge::frame(*body) == want;
    if (encoder_ok && reply_ok)
      ++ok;
    else
      bad += " " + c.name;
  }
  return {ok == total && server.log().empty(),
          std::to_string(ok) + "/" + std::to_string(total) + " golden request/response streams match" +
              (bad.empty() ? "" : "; failing:" + bad)};
}

}  // namespace

int main() {
  std::printf("audiosds acceptance suite\n");
  criterion("gradient-correctness", 60, gradients);
  criterion("adjoint-identity", 10, adjoint);
  criterion("oracle-fixed-points", 30, oracle_fixed_points);
  criterion("convergence-toy", 10, convergence);
  criterion("toy-separation", 15 * 60, toy_separation);
  criterion("ablation-harness", 20 * 60, ablations);
  criterion("determinism", 600, determinism);
  criterion("protocol-conformance", 60, protocol);
  std::printf("%s: %d criterion(s) failed\n", g_failures ? "FAIL" : "PASS", g_failures);
  return g_failures ? 1 : 0;
}
