#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audiosds/error.hpp"
#include "audiosds/random.hpp"
#include "audiosds/signal/fft.hpp"
#include "audiosds/signal/waveform.hpp"

// Synthetic signal classes the toy prior is trained on.

namespace audiosds {

enum class SignalKind { noise_band, decaying_sines, chirps };

inline std::string to_string(SignalKind k) {
  switch (k) {
    case SignalKind::noise_band: return "noise_band";
    case SignalKind::decaying_sines: return "decaying_sines";
    case SignalKind::chirps: return "chirps";
  }
  return "?";
}

inline SignalKind signal_kind_from_string(const std::string& s) {
  if (s == "noise_band") return SignalKind::noise_band;
  if (s == "decaying_sines") return SignalKind::decaying_sines;
  if (s == "chirps") return SignalKind::chirps;
  throw ConfigError("unknown signal kind '" + s + "'");
}

struct SignalClass {
  std::string name;
  SignalKind kind = SignalKind::noise_band;
  double lo_hz = 100.0;
  double hi_hz = 800.0;
  std::vector<std::string> keywords;  // prompt words mapping to this class
};

struct CorpusSpec {
  std::vector<SignalClass> classes;
  int sample_rate = 8000;
  std::size_t frames = 16000;
  std::uint64_t seed = 0;

  void validate() const {
    if (classes.empty()) throw ConfigError("corpus needs at least one class");
    if (sample_rate <= 0 || frames == 0) throw ConfigError("corpus needs positive rate and length");
    for (const auto& c : classes)
      if (!(c.lo_hz > 0 && c.hi_hz > c.lo_hz && c.hi_hz < 0.5 * sample_rate))
        throw ConfigError("class '" + c.name + "' band must satisfy 0 < lo < hi < Nyquist");
  }

  /// Class whose name or keywords occur in the prompt (case-insensitive).
  std::optional<int> class_for_prompt(const std::string& prompt) const {
    std::string p = prompt;
    std::transform(p.begin(), p.end(), p.begin(), [](unsigned char ch) { return std::tolower(ch); });
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (p.find(classes[i].name) != std::string::npos) return static_cast<int>(i);
      for (const auto& k : classes[i].keywords)
        if (p.find(k) != std::string::npos) return static_cast<int>(i);
    }
    return std::nullopt;
  }
};

/// Low rumbling noise and a bright decaying-note line: the two-class
/// corpus behind the bundled separation fixture.
inline CorpusSpec traffic_sax_corpus(std::uint64_t seed = 0) {
  CorpusSpec c;
  c.classes = {{"traffic", SignalKind::noise_band, 100.0, 800.0, {"traffic", "rumble", "engine", "car"}},
               {"sax", SignalKind::decaying_sines, 1800.0, 3400.0, {"sax", "saxophone", "melody", "note"}}};
  c.seed = seed;
  return c;
}

inline CorpusSpec three_class_corpus(std::uint64_t seed = 0) {
  auto c = traffic_sax_corpus(seed);
  c.classes.push_back({"siren", SignalKind::chirps, 900.0, 1700.0, {"siren", "chirp", "sweep", "whistle"}});
  return c;
}

inline nlohmann::json to_json(const CorpusSpec& c) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& k : c.classes)
    classes.push_back(
        {{"name", k.name}, {"kind", to_string(k.kind)}, {"lo_hz", k.lo_hz}, {"hi_hz", k.hi_hz}, {"keywords", k.keywords}});
  return {{"classes", classes}, {"sample_rate", c.sample_rate}, {"frames", c.frames}, {"seed", c.seed}};
}

inline CorpusSpec corpus_from_json(const nlohmann::json& j) {
  CorpusSpec c;
  for (const auto& k : j.at("classes"))
    c.classes.push_back({k.at("name").get<std::string>(), signal_kind_from_string(k.at("kind").get<std::string>()),
                         k.at("lo_hz").get<double>(), k.at("hi_hz").get<double>(),
                         k.value("keywords", std::vector<std::string>{})});
  c.sample_rate = j.at("sample_rate").get<int>();
  c.frames = j.at("frames").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

namespace detail {

inline void normalize_rms(std::vector<double>& x, double rms) {
  double e = 0.0;
  for (double v : x) e += v * v;
  e = std::sqrt(e / static_cast<double>(x.size()));
  if (e > 0) for (auto& v : x) v *= rms / e;
}

// White noise through a raised-cosine band mask, with a slow loudness wobble.
inline std::vector<double> noise_band(const SignalClass& c, std::size_t n, int sr, Rng& rng) {
  auto w = gaussian_vector(rng, n);
  auto& fft = real_fft(n);
  auto spec = fft.forward(w);
  const double edge = 0.1 * (c.hi_hz - c.lo_hz);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double hz = static_cast<double>(k) * sr / static_cast<double>(n);
    double g = 0.0;
    if (hz >= c.lo_hz && hz <= c.hi_hz) {
      g = 1.0;
      const double d = std::min(hz - c.lo_hz, c.hi_hz - hz);
      if (d < edge) g = 0.5 - 0.5 * std::cos(std::numbers::pi * d / edge);
    }
    spec[k] *= g;
  }
  auto out = fft.inverse(spec);
  const double rate = uniform(rng, 0.3, 1.5), phase = uniform(rng, 0, 2 * std::numbers::pi);
  const double depth = uniform(rng, 0.1, 0.4);
  for (std::size_t i = 0; i < n; ++i)
    out[i] *= 1.0 - depth + depth * std::sin(2 * std::numbers::pi * rate * i / sr + phase);
  return out;
}

// A sequence of notes with short attacks and exponential decays.
inline std::vector<double> decaying_sines(const SignalClass& c, std::size_t n, int sr, Rng& rng) {
  std::vector<double> out(n, 0.0);
  double onset = uniform(rng, 0.0, 0.1);
  const double dur = static_cast<double>(n) / sr;
  while (onset < dur) {
    const double f = uniform(rng, c.lo_hz, c.hi_hz);
    const double decay = uniform(rng, 3.0, 9.0);
    const double amp = uniform(rng, 0.5, 1.0);
    const double ph = uniform(rng, 0, 2 * std::numbers::pi);
    const double vib = uniform(rng, 4.0, 6.0);
    for (std::size_t i = static_cast<std::size_t>(onset * sr); i < n; ++i) {
      const double t = static_cast<double>(i) / sr - onset;
      const double env = std::min(1.0, t / 0.005) * std::exp(-decay * t);
      if (env < 1e-4 && t > 0.01) break;
      out[i] += amp * env * std::sin(2 * std::numbers::pi * f * t + 0.002 * f * std::sin(2 * std::numbers::pi * vib * t) + ph);
    }
    onset += uniform(rng, 0.15, 0.45);
  }
  return out;
}

// Hann-windowed linear sweeps inside the band.
inline std::vector<double> chirps(const SignalClass& c, std::size_t n, int sr, Rng& rng) {
  std::vector<double> out(n, 0.0);
  double onset = uniform(rng, 0.0, 0.1);
  const double dur = static_cast<double>(n) / sr;
  while (onset < dur) {
    const double len = uniform(rng, 0.2, 0.6);
    const double f0 = uniform(rng, c.lo_hz, c.hi_hz), f1 = uniform(rng, c.lo_hz, c.hi_hz);
    const auto start = static_cast<std::size_t>(onset * sr);
    const auto count = static_cast<std::size_t>(len * sr);
    for (std::size_t j = 0; j < count && start + j < n; ++j) {
      const double t = static_cast<double>(j) / sr;
      const double win = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * j / count);
      out[start + j] += win * std::sin(2 * std::numbers::pi * (f0 * t + 0.5 * (f1 - f0) / len * t * t));
    }
    onset += len + uniform(rng, 0.05, 0.3);
  }
  return out;
}

}  // namespace detail

/// One corpus item of the given class, mono duplicated to stereo, RMS drawn
/// from [0.05, 0.15]. Fully determined by (spec.seed, class, index).
inline Waveform corpus_item(const CorpusSpec& spec, int class_id, std::uint64_t index) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= spec.classes.size())
    throw InvalidInput("class id outside the corpus vocabulary");
  const auto& c = spec.classes[static_cast<std::size_t>(class_id)];
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(class_id) + 1, index));
  std::vector<double> x;
  switch (c.kind) {
    case SignalKind::noise_band: x = detail::noise_band(c, spec.frames, spec.sample_rate, rng); break;
    case SignalKind::decaying_sines: x = detail::decaying_sines(c, spec.frames, spec.sample_rate, rng); break;
    case SignalKind::chirps: x = detail::chirps(c, spec.frames, spec.sample_rate, rng); break;
  }
  detail::normalize_rms(x, uniform(rng, 0.05, 0.15));
  return Waveform::from_mono(x, spec.sample_rate);
}

/// Items reserved for evaluation never overlap training indices.
inline constexpr std::uint64_t kHeldOutIndexBase = 1ULL << 40;

}  // namespace audiosds
