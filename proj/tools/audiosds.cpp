// audiosds command line: synthesis, separation, evaluation, toy prior
// training, ablations and helpers. Exit codes: 0 ok, 2 configuration,
// 3 backend, 4 numeric abort.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "audiosds/app/config.hpp"
#include "audiosds/app/run.hpp"
#include "audiosds/bridge/server.hpp"
#include "audiosds/clients/text_client.hpp"
#include "audiosds/prompt/prompt_auto.hpp"
#include "audiosds/signal/wav.hpp"

namespace {

using nlohmann::json;
using namespace audiosds;

struct TaskFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string backend, bridge_addr, out, checkpoint, prompt, run_id, ablation;
  std::optional<int> class_id;
  std::optional<double> guidance, t_min, t_max, gamma, lr, duration;
  std::optional<std::size_t> steps, batch, n_denoise;
  std::string mixture;
  std::vector<std::string> sources, references, estimates;

  void add(CLI::App* app, app::Task task) {
    app->add_option("--config", config, "JSON config file (layered over the task defaults)");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--backend", backend, "prior backend")->check(CLI::IsMember({"toy", "bridge", "oracle"}));
    app->add_option("--bridge-addr", bridge_addr, "host:port of the prior bridge");
    app->add_option("--out", out, "output directory");
    app->add_option("--checkpoint", checkpoint, "toy prior checkpoint");
    app->add_option("--run-id", run_id, "run identifier for reports");
    app->add_option("--steps", steps, "optimization steps");
    app->add_option("--lr", lr, "learning rate");
    if (task == app::Task::train_toy_prior) return;
    app->add_option("--guidance-scale", guidance, "classifier-free guidance scale");
    app->add_option("--t-min", t_min, "lower diffusion time");
    app->add_option("--t-max", t_max, "upper diffusion time");
    app->add_option("--batch", batch, "noise samples per update");
    app->add_option("--denoise-steps", n_denoise, "denoising steps per sample");
    app->add_option("--duration", duration, "clip length in seconds");
    if (task == app::Task::synth_fm || task == app::Task::synth_impact) {
      app->add_option("--prompt", prompt, "text prompt");
      app->add_option("--class-id", class_id, "class label (toy prior)");
    }
    if (task == app::Task::separate || task == app::Task::eval) {
      app->add_option("--gamma", gamma, "weight of the SDS term");
      app->add_option("--mixture", mixture, "mixture WAV");
      app->add_option("--source", sources, "source prompt, or class:N (repeat per source)");
      app->add_option("--reference", references, "reference WAV per source (optional)");
    }
    if (task == app::Task::eval) app->add_option("--estimate", estimates, "estimate WAV per source");
    if (task == app::Task::ablate) {
      app->add_option("--gamma", gamma, "weight of the SDS term");
      app->add_option("--ablation", ablation, "decoder_vs_classic, spectrogram_vs_l2 or single_vs_multistep");
    }
  }

  json overrides(app::Task task) const {
    json o = json::object();
    o["task"] = app::to_string(task);
    if (seed) o["seed"] = *seed;
    if (!backend.empty()) o["backend"] = backend;
    if (!bridge_addr.empty()) o["bridge_addr"] = bridge_addr;
    if (!out.empty()) o["out"] = out;
    if (!checkpoint.empty()) o["checkpoint"] = checkpoint;
    if (!run_id.empty()) o["run_id"] = run_id;
    if (steps) o["steps"] = *steps;
    if (lr) o["optimizer"]["lr"] = *lr;
    if (guidance) o["sds"]["guidance_scale"] = *guidance;
    if (t_min) o["sds"]["t_min"] = *t_min;
    if (t_max) o["sds"]["t_max"] = *t_max;
    if (batch) o["sds"]["batch_size"] = *batch;
    if (n_denoise) o["sds"]["n_denoise_steps"] = *n_denoise;
    if (duration) o["clip"]["duration"] = *duration;
    if (!prompt.empty()) o["prompt"] = prompt;
    if (class_id) o["class_id"] = *class_id;
    if (gamma) o["separation"]["gamma"] = *gamma;
    if (!mixture.empty()) o["separation"]["mixture"] = mixture;
    if (!references.empty()) o["separation"]["references"] = references;
    if (!sources.empty()) {
      json arr = json::array();
      for (const auto& s : sources) {
        if (s.rfind("class:", 0) == 0)
          arr.push_back({{"label", s}, {"class_id", std::stoi(s.substr(6))}});
        else
          arr.push_back({{"label", s}, {"prompt", s}});
      }
      o["separation"]["sources"] = arr;
    }
    if (!estimates.empty()) o["eval"]["estimates"] = estimates;
    if (!ablation.empty()) o["ablate"]["kind"] = ablation;
    return o;
  }
};

int report_error(const std::exception& e) {
  std::cerr << "error: " << e.what() << "\n";
  return app::exit_code_for(e);
}

int run_task(app::Task task, const TaskFlags& f) {
  std::optional<std::filesystem::path> file;
  if (!f.config.empty()) file = f.config;
  const auto cfg = app::load_config(file, f.overrides(task));
  const auto summary = app::run(cfg);
  std::cout << summary.dump(2) << "\n";
  return app::kExitOk;
}

int run_prompts(const std::string& mixture, const std::vector<std::size_t>& ks, const std::string& out) {
  auto captioner = HttpTextClient::from_env("AUDIOSDS_CAPTION_URL");
  auto llm = HttpTextClient::from_env("AUDIOSDS_LLM_URL");
  if (!captioner) throw ConfigError("set AUDIOSDS_CAPTION_URL to a captioning endpoint");
  if (!llm) throw ConfigError("set AUDIOSDS_LLM_URL to an LLM endpoint");
  const auto audio = wav_read(mixture);
  const auto cap = caption(audio, *captioner);
  const auto sug = suggest_decompositions(cap, ks, *llm);
  json j{{"caption", cap}, {"proposals", json::array()}, {"rejected", json::array()}};
  for (const auto& p : sug.proposals) j["proposals"].push_back({{"k", p.k}, {"example", p.example}, {"prompts", p.prompts}});
  for (const auto& r : sug.rejected) j["rejected"].push_back({{"k", r.k}, {"example", r.example}, {"reason", r.reason}});
  if (out.empty())
    std::cout << j.dump(2) << "\n";
  else
    std::ofstream(out, std::ios::binary) << j.dump(2) << "\n";
  return app::kExitOk;
}

volatile std::sig_atomic_t g_stop = 0;

int run_serve(const std::string& checkpoint, unsigned short port) {
  std::unique_ptr<ToyPrior> prior;
  if (!checkpoint.empty()) prior = std::make_unique<ToyPrior>(ToyPriorCheckpoint::load(checkpoint));
  bridge::LoopbackServer server(prior.get(), port);
  std::cout << "serving " << (prior ? "toy prior" : "echo") << " on " << server.address() << std::endl;
  std::signal(SIGINT, [](int) { g_stop = 1; });
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  server.stop();
  return app::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Score-distillation audio synthesis and prompt-guided separation"};
  cli.require_subcommand(1);

  std::vector<std::pair<app::Task, CLI::App*>> tasks;
  std::vector<TaskFlags> flags(app::task_names().size());
  const std::vector<std::string> help = {"fit the FM synthesizer to a prompt", "fit the modal impact model to a prompt",
                                         "separate a mixture into prompted sources", "score separated sources",
                                         "train the toy diffusion prior", "run an ablation"};
  for (std::size_t i = 0; i < app::task_names().size(); ++i) {
    const auto& [task, name] = app::task_names()[i];
    auto* sub = cli.add_subcommand(name, help[i]);
    flags[i].add(sub, task);
    tasks.emplace_back(task, sub);
  }

  std::string run_config;
  std::optional<std::uint64_t> run_seed;
  std::string run_out;
  auto* run_cmd = cli.add_subcommand("run", "run whatever task a config file names");
  run_cmd->add_option("--config", run_config, "JSON config file")->required();
  run_cmd->add_option("--seed", run_seed, "master seed");
  run_cmd->add_option("--out", run_out, "output directory");

  std::string mm_checkpoint = "toy_prior.json", mm_out = "mixture";
  std::size_t mm_frames = 8000;
  auto* mm = cli.add_subcommand("make-mixture", "write a two-source toy mixture with references and a config");
  mm->add_option("--checkpoint", mm_checkpoint, "toy prior checkpoint");
  mm->add_option("--out", mm_out, "output directory");
  mm->add_option("--frames", mm_frames, "clip length in samples");

  std::string pr_mixture, pr_out;
  std::vector<std::size_t> pr_k = {2, 3};
  auto* pr = cli.add_subcommand("prompts", "caption a mixture and propose per-source prompts");
  pr->add_option("--mixture", pr_mixture, "mixture WAV")->required();
  pr->add_option("--k", pr_k, "source counts to propose")->delimiter(',');
  pr->add_option("--out", pr_out, "write proposals as JSON here");

  std::string sv_checkpoint;
  unsigned short sv_port = 0;
  auto* sv = cli.add_subcommand("serve", "serve a prior over the bridge protocol on 127.0.0.1");
  sv->add_option("--checkpoint", sv_checkpoint, "toy prior checkpoint (echo server if omitted)");
  sv->add_option("--port", sv_port, "port (0 picks a free one)");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? app::kExitOk : app::kExitConfig;
  }

  try {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i].second->parsed()) return run_task(tasks[i].first, flags[i]);
    if (run_cmd->parsed()) {
      json o = json::object();
      if (run_seed) o["seed"] = *run_seed;
      if (!run_out.empty()) o["out"] = run_out;
      const auto cfg = app::load_config(std::filesystem::path(run_config), o);
      std::cout << app::run(cfg).dump(2) << "\n";
      return app::kExitOk;
    }
    if (mm->parsed()) {
      app::ToySeparationFixture f;
      f.frames = mm_frames;
      app::write_toy_mixture(mm_checkpoint, f, mm_out);
      std::cout << "wrote " << mm_out << "/mixture.wav and " << mm_out << "/separate.json\n";
      return app::kExitOk;
    }
    if (pr->parsed()) return run_prompts(pr_mixture, pr_k, pr_out);
    if (sv->parsed()) return run_serve(sv_checkpoint, sv_port);
  } catch (const std::exception& e) {
    return report_error(e);
  }
  return app::kExitConfig;
}
