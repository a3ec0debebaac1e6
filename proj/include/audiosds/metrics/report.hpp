#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audiosds/clients/text_client.hpp"
#include "audiosds/error.hpp"
#include "audiosds/metrics/sdr.hpp"

namespace audiosds {

/// Cosine-similarity score from an external CLAP service for (audio, prompt).
/// The response is either a bare number or {"score": x}; anything outside
/// [-1, 1] is a protocol error.
inline double clap_score(const Waveform& audio, const std::string& prompt, TextClient& client) {
  auto req = audio_request("clap", audio);
  req["prompt"] = prompt;
  const auto body = client.post(req.dump());
  double score = 0.0;
  try {
    const auto j = nlohmann::json::parse(body);
    score = j.is_object() ? j.at("score").get<double>() : j.get<double>();
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("CLAP response is not a score: '" + body.substr(0, 80) + "'");
  }
  if (!std::isfinite(score) || score < -1.0 || score > 1.0)
    throw ProtocolError("CLAP score " + std::to_string(score) + " outside [-1, 1]");
  return score;
}

/// A sample range of the clip. `first_half` mirrors reporting on the start of
/// the clip, where optimization artifacts are rarest.
struct ReportWindow {
  std::string name;
  std::size_t begin = 0;
  std::size_t count = 0;

  static ReportWindow full(std::size_t frames) { return {"full", 0, frames}; }
  static ReportWindow first_half(std::size_t frames) { return {"first_half", 0, frames / 2}; }
};

struct ReportRow {
  std::string mixture_id;
  std::string source_index;  // "1".."K", or "mixture" for the reconstruction
  std::string window;
  std::optional<double> sdr_db;
  std::optional<double> clap;
  std::string run_id;
};

struct SeparationReport {
  std::vector<ReportRow> rows;

  std::optional<double> sdr(const std::string& source, const std::string& window) const {
    for (const auto& r : rows)
      if (r.source_index == source && r.window == window) return r.sdr_db;
    return std::nullopt;
  }

  /// Mean over sources (not the mixture row); nullopt if any is missing.
  std::optional<double> mean_source_sdr(const std::string& window) const {
    double s = 0.0;
    int n = 0;
    for (const auto& r : rows) {
      if (r.window != window || r.source_index == "mixture") continue;
      if (!r.sdr_db) return std::nullopt;
      s += *r.sdr_db;
      ++n;
    }
    if (n == 0) return std::nullopt;
    return s / n;
  }

  std::string to_csv() const {
    auto num = [](const std::optional<double>& v) {
      if (!v) return std::string();
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", *v);
      return std::string(buf);
    };
    std::string out = "mixture_id,source_index,window,sdr_db,clap,run_id\n";
    for (const auto& r : rows)
      out += r.mixture_id + "," + r.source_index + "," + r.window + "," + num(r.sdr_db) + "," + num(r.clap) + "," +
             r.run_id + "\n";
    return out;
  }

  void write_csv(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path.string());
    f << to_csv();
  }
};

struct ReportInputs {
  std::string mixture_id = "mixture";
  std::string run_id;
  Waveform mixture;
  std::vector<Waveform> estimates;
  std::vector<Waveform> references;  // empty when ground truth is unknown
  std::vector<std::string> prompts;  // for CLAP; may be empty
  SdrKind kind = SdrKind::scale_invariant;
};

/// One row per (source, window) plus a mixture-reconstruction row per window.
/// SDR columns are left empty without references; CLAP is left empty without
/// a client (never a placeholder number).
inline SeparationReport build_separation_report(const ReportInputs& in, const std::vector<ReportWindow>& windows,
                                                TextClient* clap = nullptr) {
  if (in.estimates.empty()) throw InvalidInput("report needs at least one estimate");
  if (!in.references.empty() && in.references.size() != in.estimates.size())
    throw InvalidInput("one reference per estimate expected");
  if (!in.prompts.empty() && in.prompts.size() != in.estimates.size())
    throw InvalidInput("one prompt per estimate expected");
  const std::size_t frames = in.mixture.frames();
  for (const auto& e : in.estimates) in.mixture.require_same_shape(e);
  for (const auto& r : in.references) in.mixture.require_same_shape(r);
  for (const auto& w : windows)
    if (w.count == 0 || w.begin + w.count > frames) throw InvalidInput("report window '" + w.name + "' exceeds the clip");

  Waveform recon(frames, in.mixture.sample_rate());
  for (const auto& e : in.estimates) recon += e;

  SeparationReport rep;
  for (const auto& w : windows) {
    for (std::size_t k = 0; k < in.estimates.size(); ++k) {
      ReportRow row{in.mixture_id, std::to_string(k + 1), w.name, std::nullopt, std::nullopt, in.run_id};
      const auto est = in.estimates[k].slice(w.begin, w.count);
      if (!in.references.empty()) {
        try {
          row.sdr_db = sdr(in.references[k].slice(w.begin, w.count), est, in.kind);
        } catch (const UndefinedMetric&) {
        }
      }
      if (clap && !in.prompts.empty()) row.clap = clap_score(est, in.prompts[k], *clap);
      rep.rows.push_back(row);
    }
    ReportRow mix{in.mixture_id, "mixture", w.name, std::nullopt, std::nullopt, in.run_id};
    try {
      mix.sdr_db = sdr(in.mixture.slice(w.begin, w.count), recon.slice(w.begin, w.count), in.kind);
    } catch (const UndefinedMetric&) {
    }
    rep.rows.push_back(mix);
  }
  return rep;
}

}  // namespace audiosds
