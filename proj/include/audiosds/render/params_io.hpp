#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "audiosds/error.hpp"
#include "audiosds/render/fm.hpp"
#include "audiosds/render/impact.hpp"

// Parameter checkpoints as plain "key = value" text. Metadata comes first;
// lines after "[raw]" are vector fields of raw (pre-mapping) values in
// layout order, printed with 17 significant digits so a write/read cycle is
// exact.
//
//   # audiosds parameters
//   renderer = fm
//   operators = 4
//   step = 250
//   [raw]
//   log_fm_matrix = -0.01 -8.003 ...

namespace audiosds {

struct ParamCheckpoint {
  std::string renderer;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, std::vector<double>>> fields;

  std::vector<double> flatten() const {
    std::vector<double> out;
    for (const auto& [name, v] : fields) out.insert(out.end(), v.begin(), v.end());
    return out;
  }

  const std::vector<double>& field(const std::string& name) const {
    for (const auto& [n, v] : fields)
      if (n == name) return v;
    throw FormatError("parameter checkpoint lacks field '" + name + "'", 0);
  }

  const std::string& get(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw FormatError("parameter checkpoint lacks key '" + key + "'", 0);
    return it->second;
  }

  bool operator==(const ParamCheckpoint&) const = default;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<double> parse_doubles(std::string_view v, std::size_t offset) {
  std::vector<double> out;
  std::istringstream in{std::string(v)};
  std::string tok;
  while (in >> tok) {
    char* end = nullptr;
    const double d = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) throw FormatError("bad number '" + tok + "' in parameter checkpoint", offset);
    out.push_back(d);
  }
  return out;
}

}  // namespace detail

inline std::string format_params(const ParamCheckpoint& c) {
  std::string out = "# audiosds parameters\nrenderer = " + c.renderer + "\n";
  for (const auto& [k, v] : c.meta) out += k + " = " + v + "\n";
  out += "[raw]\n";
  for (const auto& [name, vals] : c.fields) {
    out += name + " =";
    for (double v : vals) out += " " + detail::format_double(v);
    out += "\n";
  }
  return out;
}

inline ParamCheckpoint parse_params(std::string_view text) {
  ParamCheckpoint c;
  bool raw = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const auto line = detail::trim(text.substr(pos, eol - pos));
    const std::size_t line_start = pos;
    pos = eol + 1;
    if (line.empty() || line.front() == '#') continue;
    if (line == "[raw]") {
      raw = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError("expected 'key = value' in parameter checkpoint", line_start);
    const std::string key(detail::trim(line.substr(0, eq)));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw FormatError("empty key in parameter checkpoint", line_start);
    if (raw) {
      c.fields.emplace_back(key, detail::parse_doubles(value, line_start));
    } else if (key == "renderer") {
      c.renderer = std::string(value);
    } else {
      c.meta[key] = std::string(value);
    }
  }
  if (c.renderer.empty()) throw FormatError("parameter checkpoint names no renderer", 0);
  return c;
}

inline void write_params(const ParamCheckpoint& c, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << format_params(c);
}

inline ParamCheckpoint read_params(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_params(ss.str());
}

inline ParamCheckpoint fm_checkpoint(std::span<const double> theta, std::size_t operators, std::uint64_t step) {
  const auto p = FMParams::unpack(theta, operators);
  ParamCheckpoint c;
  c.renderer = "fm";
  c.meta["operators"] = std::to_string(operators);
  c.meta["step"] = std::to_string(step);
  c.fields = {{"log_fm_matrix", p.log_fm_matrix},
              {"raw_ratios", p.raw_ratios},
              {"raw_attacks", p.raw_attacks},
              {"raw_decays", p.raw_decays}};
  return c;
}

inline ParamCheckpoint impact_checkpoint(std::span<const double> theta, std::size_t modes, std::uint64_t noise_seed,
                                         std::uint64_t step) {
  if (theta.size() != 6 * modes) throw InvalidInput("impact parameter vector has the wrong size");
  static const char* names[] = {"amplitudes",         "log_dampings",        "raw_frequencies",
                                "reverb_amplitudes",  "reverb_log_dampings", "raw_reverb_centers"};
  ParamCheckpoint c;
  c.renderer = "impact";
  c.meta["modes"] = std::to_string(modes);
  c.meta["noise_seed"] = std::to_string(noise_seed);
  c.meta["step"] = std::to_string(step);
  for (std::size_t b = 0; b < 6; ++b)
    c.fields.emplace_back(names[b], std::vector<double>(theta.begin() + b * modes, theta.begin() + (b + 1) * modes));
  return c;
}

inline ParamCheckpoint latent_checkpoint(std::span<const double> theta, std::size_t channels, std::size_t frames,
                                         const std::string& label, std::uint64_t step) {
  ParamCheckpoint c;
  c.renderer = "latent";
  c.meta["channels"] = std::to_string(channels);
  c.meta["frames"] = std::to_string(frames);
  c.meta["label"] = label;
  c.meta["step"] = std::to_string(step);
  c.fields.emplace_back("values", std::vector<double>(theta.begin(), theta.end()));
  return c;
}

}  // namespace audiosds
