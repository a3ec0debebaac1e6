#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audiosds/error.hpp"
#include "audiosds/optim.hpp"
#include "audiosds/prior/toy.hpp"
#include "audiosds/random.hpp"
#include "audiosds/render/impact.hpp"
#include "audiosds/sds/engine.hpp"
#include "audiosds/separation/separation.hpp"

// Run configuration: built-in per-task defaults < config file < flags, all
// as JSON patches, then validated into typed form with every problem
// reported at once.

namespace audiosds::app {

enum class Task { synth_fm, synth_impact, separate, eval, train_toy_prior, ablate };
enum class Backend { toy, bridge, oracle };

inline const std::vector<std::pair<Task, std::string>>& task_names() {
  static const std::vector<std::pair<Task, std::string>> t = {
      {Task::synth_fm, "synth-fm"},   {Task::synth_impact, "synth-impact"},       {Task::separate, "separate"},
      {Task::eval, "eval"},           {Task::train_toy_prior, "train-toy-prior"}, {Task::ablate, "ablate"}};
  return t;
}

inline std::string to_string(Task t) {
  for (const auto& [k, v] : task_names())
    if (k == t) return v;
  return "?";
}

inline Task task_from_string(const std::string& s) {
  for (const auto& [k, v] : task_names())
    if (v == s) return k;
  throw ConfigError("unknown task '" + s + "'");
}

inline std::string to_string(Backend b) {
  switch (b) {
    case Backend::toy: return "toy";
    case Backend::bridge: return "bridge";
    case Backend::oracle: return "oracle";
  }
  return "?";
}

inline Backend backend_from_string(const std::string& s) {
  if (s == "toy") return Backend::toy;
  if (s == "bridge") return Backend::bridge;
  if (s == "oracle") return Backend::oracle;
  throw ConfigError("unknown backend '" + s + "' (toy, bridge, oracle)");
}

enum class AblationKind { decoder_vs_classic, spectrogram_vs_l2, single_vs_multistep };

inline std::string to_string(AblationKind k) {
  switch (k) {
    case AblationKind::decoder_vs_classic: return "decoder_vs_classic";
    case AblationKind::spectrogram_vs_l2: return "spectrogram_vs_l2";
    case AblationKind::single_vs_multistep: return "single_vs_multistep";
  }
  return "?";
}

inline AblationKind ablation_from_string(const std::string& s) {
  if (s == "decoder_vs_classic") return AblationKind::decoder_vs_classic;
  if (s == "spectrogram_vs_l2") return AblationKind::spectrogram_vs_l2;
  if (s == "single_vs_multistep") return AblationKind::single_vs_multistep;
  throw ConfigError("unknown ablation '" + s + "'");
}

struct SourceSpec {
  std::string label;
  Conditioning cond;
};

struct RunConfig {
  Task task = Task::synth_fm;
  std::uint64_t seed = 0;
  Backend backend = Backend::toy;
  std::string bridge_addr;
  std::string checkpoint;
  std::string out;
  std::string run_id;
  Conditioning cond;
  double duration = 3.0;
  std::optional<int> sample_rate;  // unset: the prior's rate
  SdsConfig sds;
  OptimizerConfig optimizer;
  std::size_t steps = 1000;
  std::size_t log_every = 1;
  std::size_t checkpoint_every = 100;

  std::size_t fm_operators = 4;

  std::size_t impact_modes = 2048;
  std::uint64_t impact_noise_seed = 0;
  double impact_rel_bandwidth = 0.05;
  FrequencySpacing impact_spacing = FrequencySpacing::linear;
  double impact_lo_hz = 100.0, impact_hi_hz = 18000.0, impact_freq_noise = 1e-4;

  std::string mixture;
  std::vector<SourceSpec> sources;
  std::vector<std::string> references;
  std::vector<std::string> estimates;
  std::string mixture_id = "mixture";
  double gamma = 0.02;
  SourceParametrization parametrization = SourceParametrization::latent;
  SpectrogramConfig recon;
  double init_noise = 0.01;
  SdrKind sdr_kind = SdrKind::scale_invariant;

  std::string corpus = "traffic_sax";
  ToyTrainingConfig training;

  AblationKind ablation = AblationKind::single_vs_multistep;
  nlohmann::json ablation_options = nlohmann::json::object();

  nlohmann::json resolved;  // the merged JSON this was parsed from

  SeparationConfig separation_config() const {
    SeparationConfig c;
    c.gamma = gamma;
    c.parametrization = parametrization;
    c.sds = sds;
    c.sds.variant = SdsVariant::spec_decoder;
    c.recon = recon;
    c.optimizer = optimizer;
    c.steps = steps;
    c.log_every = log_every;
    c.init_noise = init_noise;
    c.seed = seed;
    return c;
  }
};

/// Built-in defaults for a task; the synthesis and separation values are
/// the published optimization, guidance and problem tables.
inline nlohmann::json default_config(Task task) {
  nlohmann::json j = {
      {"task", to_string(task)},
      {"seed", 0},
      {"backend", "toy"},
      {"bridge_addr", ""},
      {"checkpoint", "toy_prior.json"},
      {"out", "runs/" + to_string(task)},
      {"run_id", ""},
      {"prompt", nullptr},
      {"class_id", nullptr},
      {"clip", {{"duration", 3.0}, {"sample_rate", nullptr}}},
      {"sds",
       {{"t_min", 0.6},
        {"t_max", 1.0},
        {"guidance_scale", 15.0},
        {"batch_size", 8},
        {"n_denoise_steps", 3},
        {"weight", "constant"},
        {"variant", "decoder"},
        {"window_sizes", {1024, 2048, 4096}}}},
      {"optimizer", {{"kind", "adam"}, {"lr", 1e-2}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}}},
      {"steps", 1000},
      {"log_every", 1},
      {"checkpoint_every", 100},
      {"fm", {{"operators", 4}}},
      {"impact",
       {{"modes", 2048},
        {"noise_seed", 0},
        {"rel_bandwidth", 0.05},
        {"spacing", "linear"},
        {"lo_hz", 100.0},
        {"hi_hz", 18000.0},
        {"freq_noise", 1e-4}}},
      {"separation",
       {{"mixture", ""},
        {"mixture_id", "mixture"},
        {"sources", nlohmann::json::array()},
        {"references", nlohmann::json::array()},
        {"gamma", 0.02},
        {"parametrization", "latent"},
        {"recon_window_sizes", {1024, 2048, 4096}},
        {"init_noise", 0.01},
        {"metric", "si_sdr"}}},
      {"eval", {{"estimates", nlohmann::json::array()}}},
      {"train", ToyTrainingConfig{}.to_json()},
      {"ablate", {{"kind", "single_vs_multistep"}, {"options", nlohmann::json::object()}}},
  };
  j["train"]["corpus"] = "traffic_sax";
  switch (task) {
    case Task::synth_fm:
      j["optimizer"]["lr"] = 1e-2;
      j["sds"]["t_min"] = 0.6;
      j["sds"]["t_max"] = 1.0;
      j["sds"]["guidance_scale"] = 15.0;
      j["sds"]["n_denoise_steps"] = 3;
      j["sds"]["batch_size"] = 8;
      j["sds"]["variant"] = "decoder";
      j["steps"] = 1000;
      break;
    case Task::synth_impact:
      j["optimizer"]["lr"] = 5e-3;
      j["sds"]["t_min"] = 0.7;
      j["sds"]["t_max"] = 1.0;
      j["sds"]["guidance_scale"] = 15.0;
      j["sds"]["n_denoise_steps"] = 10;
      j["sds"]["batch_size"] = 8;
      j["sds"]["variant"] = "decoder";
      j["steps"] = 1000;
      break;
    case Task::separate:
    case Task::eval:
    case Task::ablate:
      j["optimizer"]["lr"] = 5e-2;
      j["sds"]["t_min"] = 0.025;
      j["sds"]["t_max"] = 0.875;
      j["sds"]["guidance_scale"] = 60.0;
      j["sds"]["n_denoise_steps"] = 2;
      j["sds"]["batch_size"] = 10;
      j["sds"]["variant"] = "spec_decoder";
      j["clip"]["duration"] = 10.0;
      j["steps"] = 1000;
      break;
    case Task::train_toy_prior: break;
  }
  return j;
}

inline std::uint64_t default_config_hash(Task task) { return fnv1a64(default_config(task).dump()); }

namespace detail {

// Keys of `patch` absent from `base`, as dotted paths. Arrays and null
// defaults accept anything.
inline void unknown_keys(const nlohmann::json& base, const nlohmann::json& patch, const std::string& prefix,
                         std::vector<std::string>& out) {
  if (!patch.is_object()) return;
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const auto path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) {
      out.push_back("unknown key '" + path + "'");
      continue;
    }
    const auto& b = base[it.key()];
    if (b.is_object() && !b.empty()) unknown_keys(b, it.value(), path, out);
  }
}

class FieldReader {
 public:
  FieldReader(const nlohmann::json& j, std::vector<std::string>& errors) : j_(j), errors_(errors) {}

  template <class T>
  T get(const std::string& dotted, T fallback) {
    const nlohmann::json* cur = &j_;
    std::size_t pos = 0;
    while (pos <= dotted.size()) {
      const auto dot = dotted.find('.', pos);
      const auto key = dotted.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
      if (!cur->is_object() || !cur->contains(key)) {
        errors_.push_back("missing key '" + dotted + "'");
        return fallback;
      }
      cur = &(*cur)[key];
      if (dot == std::string::npos) break;
      pos = dot + 1;
    }
    try {
      return cur->get<T>();
    } catch (const nlohmann::json::exception&) {
      errors_.push_back("key '" + dotted + "' has the wrong type (" + cur->dump() + ")");
      return fallback;
    }
  }

  const nlohmann::json& raw(const std::string& dotted) const {
    const nlohmann::json* cur = &j_;
    std::size_t pos = 0;
    while (true) {
      const auto dot = dotted.find('.', pos);
      cur = &cur->at(dotted.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos));
      if (dot == std::string::npos) return *cur;
      pos = dot + 1;
    }
  }

  template <class F>
  void check(const std::string& what, F&& f) {
    try {
      f();
    } catch (const Error& e) {
      errors_.push_back(what + ": " + e.what());
    }
  }

 private:
  const nlohmann::json& j_;
  std::vector<std::string>& errors_;
};

inline Conditioning conditioning_from(const nlohmann::json& j, std::vector<std::string>& errors,
                                      const std::string& where) {
  const bool has_p = j.contains("prompt") && !j["prompt"].is_null();
  const bool has_c = j.contains("class_id") && !j["class_id"].is_null();
  if (has_p && has_c) errors.push_back(where + ": give either a prompt or a class_id, not both");
  try {
    if (has_p) return Conditioning::text(j["prompt"].get<std::string>());
    if (has_c) return Conditioning::label(j["class_id"].get<int>());
  } catch (const nlohmann::json::exception&) {
    errors.push_back(where + ": prompt must be text and class_id an integer");
  }
  return Conditioning::null();
}

}  // namespace detail

/// Recursive object merge; unlike a JSON merge patch, null overwrites
/// instead of deleting.
inline void deep_merge(nlohmann::json& base, const nlohmann::json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object())
      deep_merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

/// Parses and validates a merged configuration. Every problem found is
/// listed in one ConfigError.
inline RunConfig parse_config(const nlohmann::json& merged) {
  std::vector<std::string> errors;
  detail::FieldReader r(merged, errors);
  RunConfig c;
  c.resolved = merged;
  r.check("task", [&] { c.task = task_from_string(r.get<std::string>("task", "synth-fm")); });
  detail::unknown_keys(default_config(c.task), merged, "", errors);
  c.seed = r.get<std::uint64_t>("seed", 0);
  r.check("backend", [&] { c.backend = backend_from_string(r.get<std::string>("backend", "toy")); });
  c.bridge_addr = r.get<std::string>("bridge_addr", "");
  c.checkpoint = r.get<std::string>("checkpoint", "");
  c.out = r.get<std::string>("out", "");
  c.run_id = r.get<std::string>("run_id", "");
  if (c.run_id.empty()) c.run_id = to_string(c.task) + "-seed" + std::to_string(c.seed);
  c.cond = detail::conditioning_from(merged, errors, "conditioning");
  c.duration = r.get<double>("clip.duration", 3.0);
  if (merged.contains("clip") && merged["clip"].contains("sample_rate") && !merged["clip"]["sample_rate"].is_null())
    c.sample_rate = r.get<int>("clip.sample_rate", kDefaultSampleRate);

  c.sds.t_min = r.get<double>("sds.t_min", 0.0);
  c.sds.t_max = r.get<double>("sds.t_max", 1.0);
  c.sds.guidance_scale = r.get<double>("sds.guidance_scale", 1.0);
  c.sds.batch_size = r.get<std::size_t>("sds.batch_size", 1);
  c.sds.n_denoise_steps = r.get<int>("sds.n_denoise_steps", 1);
  r.check("sds.weight", [&] { c.sds.weight = weight_mode_from_string(r.get<std::string>("sds.weight", "constant")); });
  r.check("sds.variant", [&] { c.sds.variant = sds_variant_from_string(r.get<std::string>("sds.variant", "decoder")); });
  c.sds.spectrogram.window_sizes = r.get<std::vector<std::size_t>>("sds.window_sizes", {1024});
  c.sds.seed = derive_seed(c.seed, 0x5d5);
  r.check("sds", [&] { c.sds.validate(); });
  if (c.sds.variant != SdsVariant::spec_decoder) r.check("sds.window_sizes", [&] { c.sds.spectrogram.validate(); });

  r.check("optimizer.kind", [&] { c.optimizer.kind = optimizer_kind_from_string(r.get<std::string>("optimizer.kind", "adam")); });
  c.optimizer.lr = r.get<double>("optimizer.lr", 1e-2);
  c.optimizer.beta1 = r.get<double>("optimizer.beta1", 0.9);
  c.optimizer.beta2 = r.get<double>("optimizer.beta2", 0.999);
  c.optimizer.eps = r.get<double>("optimizer.eps", 1e-8);
  if (!(c.optimizer.lr > 0.0)) errors.push_back("optimizer.lr must be positive");
  c.steps = r.get<std::size_t>("steps", 1000);
  c.log_every = r.get<std::size_t>("log_every", 1);
  c.checkpoint_every = r.get<std::size_t>("checkpoint_every", 100);
  if (c.steps == 0) errors.push_back("steps must be positive");
  if (c.log_every == 0) errors.push_back("log_every must be positive");
  if (c.checkpoint_every == 0) errors.push_back("checkpoint_every must be positive");
  if (!(c.duration > 0.0)) errors.push_back("clip.duration must be positive");
  if (c.sample_rate && *c.sample_rate <= 0) errors.push_back("clip.sample_rate must be positive");

  c.fm_operators = r.get<std::size_t>("fm.operators", 4);
  c.impact_modes = r.get<std::size_t>("impact.modes", 2048);
  c.impact_noise_seed = r.get<std::uint64_t>("impact.noise_seed", 0);
  c.impact_rel_bandwidth = r.get<double>("impact.rel_bandwidth", 0.05);
  const auto spacing = r.get<std::string>("impact.spacing", "linear");
  if (spacing == "linear")
    c.impact_spacing = FrequencySpacing::linear;
  else if (spacing == "log")
    c.impact_spacing = FrequencySpacing::log;
  else
    errors.push_back("impact.spacing must be linear or log");
  c.impact_lo_hz = r.get<double>("impact.lo_hz", 100.0);
  c.impact_hi_hz = r.get<double>("impact.hi_hz", 18000.0);
  c.impact_freq_noise = r.get<double>("impact.freq_noise", 1e-4);

  c.mixture = r.get<std::string>("separation.mixture", "");
  c.mixture_id = r.get<std::string>("separation.mixture_id", "mixture");
  c.references = r.get<std::vector<std::string>>("separation.references", {});
  c.gamma = r.get<double>("separation.gamma", 0.02);
  r.check("separation.parametrization", [&] {
    c.parametrization = parametrization_from_string(r.get<std::string>("separation.parametrization", "latent"));
  });
  c.recon.window_sizes = r.get<std::vector<std::size_t>>("separation.recon_window_sizes", {1024});
  c.init_noise = r.get<double>("separation.init_noise", 0.01);
  const auto metric = r.get<std::string>("separation.metric", "si_sdr");
  if (metric == "si_sdr")
    c.sdr_kind = SdrKind::scale_invariant;
  else if (metric == "sdr")
    c.sdr_kind = SdrKind::plain;
  else
    errors.push_back("separation.metric must be si_sdr or sdr");
  const auto srcs = merged.contains("separation") ? merged["separation"].value("sources", nlohmann::json::array())
                                                  : nlohmann::json::array();
  if (!srcs.is_array()) {
    errors.push_back("separation.sources must be a list");
  } else {
    for (std::size_t i = 0; i < srcs.size(); ++i) {
      const auto where = "separation.sources[" + std::to_string(i) + "]";
      if (!srcs[i].is_object()) {
        errors.push_back(where + " must be an object");
        continue;
      }
      SourceSpec s;
      s.label = srcs[i].value("label", "source" + std::to_string(i + 1));
      s.cond = detail::conditioning_from(srcs[i], errors, where);
      c.sources.push_back(std::move(s));
    }
  }
  c.estimates = r.get<std::vector<std::string>>("eval.estimates", {});

  c.corpus = r.get<std::string>("train.corpus", "traffic_sax");
  if (c.corpus != "traffic_sax" && c.corpus != "three_class") errors.push_back("train.corpus must be traffic_sax or three_class");
  r.check("train", [&] {
    auto t = merged.value("train", nlohmann::json::object());
    t.erase("corpus");
    c.training = ToyTrainingConfig::from_json(t);
  });

  r.check("ablate.kind", [&] { c.ablation = ablation_from_string(r.get<std::string>("ablate.kind", "single_vs_multistep")); });
  if (merged.contains("ablate")) c.ablation_options = merged["ablate"].value("options", nlohmann::json::object());

  // Task-level requirements.
  if (c.out.empty()) errors.push_back("out must name an output directory");
  if (c.backend == Backend::bridge && c.bridge_addr.empty()) {
    if (const char* env = std::getenv("AUDIOSDS_BRIDGE_ADDR"); env && *env)
      c.bridge_addr = env;
    else
      errors.push_back("bridge backend needs bridge_addr or AUDIOSDS_BRIDGE_ADDR");
  }
  const bool needs_checkpoint = c.backend == Backend::toy && (c.task == Task::synth_fm || c.task == Task::synth_impact ||
                                                              c.task == Task::separate ||
                                                              (c.task == Task::ablate && c.ablation != AblationKind::spectrogram_vs_l2));
  if (needs_checkpoint && !std::filesystem::exists(c.checkpoint))
    errors.push_back("toy prior checkpoint not found: '" + c.checkpoint + "' (run train-toy-prior first)");
  if (c.task == Task::separate || c.task == Task::eval) {
    if (c.mixture.empty())
      errors.push_back("separation.mixture is required");
    else if (!std::filesystem::exists(c.mixture))
      errors.push_back("mixture file not found: '" + c.mixture + "'");
    for (const auto& p : c.references)
      if (!std::filesystem::exists(p)) errors.push_back("reference file not found: '" + p + "'");
  }
  if (c.task == Task::separate) {
    if (c.sources.size() < 2) errors.push_back("separation needs at least two sources");
    if (!(c.gamma > 0.0)) errors.push_back("separation.gamma must be positive");
    if (!c.references.empty() && c.references.size() != c.sources.size())
      errors.push_back("separation.references needs one file per source");
    r.check("separation.recon_window_sizes", [&] { c.recon.validate(); });
  }
  if (c.task == Task::eval) {
    if (c.estimates.empty()) errors.push_back("eval.estimates is required");
    for (const auto& p : c.estimates)
      if (!std::filesystem::exists(p)) errors.push_back("estimate file not found: '" + p + "'");
    if (!c.references.empty() && c.references.size() != c.estimates.size())
      errors.push_back("separation.references needs one file per estimate");
  }
  if ((c.task == Task::synth_fm || c.task == Task::synth_impact) && c.backend == Backend::toy && c.cond.is_null())
    errors.push_back("synthesis with the toy prior needs a prompt or class_id");

  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return c;
}

/// defaults(task) <- file <- overrides, where the task comes from the
/// overrides, else the file, else `fallback_task`.
inline RunConfig load_config(const std::optional<std::filesystem::path>& file, const nlohmann::json& overrides,
                             std::optional<Task> fallback_task = std::nullopt) {
  nlohmann::json from_file = file ? read_json_file(*file) : nlohmann::json::object();
  if (!from_file.is_object()) throw ConfigError("config file must hold a JSON object");
  std::string task;
  if (overrides.contains("task"))
    task = overrides["task"].get<std::string>();
  else if (from_file.contains("task") && from_file["task"].is_string())
    task = from_file["task"].get<std::string>();
  else if (fallback_task)
    task = to_string(*fallback_task);
  else
    throw ConfigError("no task given");
  auto merged = default_config(task_from_string(task));
  deep_merge(merged, from_file);
  deep_merge(merged, overrides);
  merged["task"] = task;
  return parse_config(merged);
}

}  // namespace audiosds::app
