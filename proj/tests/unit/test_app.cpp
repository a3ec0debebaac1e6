#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "audiosds/app/config.hpp"
#include "audiosds/app/run.hpp"
#include "audiosds/render/params_io.hpp"
#include "test_support.hpp"

using namespace audiosds;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("audiosds_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string config_error(const json& overrides) {
  try {
    app::load_config(std::nullopt, overrides);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("task defaults carry the published optimization settings", "[app][config]") {
  const auto fm = app::default_config(app::Task::synth_fm);
  CHECK(fm["optimizer"]["lr"] == 1e-2);
  CHECK(fm["sds"]["t_min"] == 0.6);
  CHECK(fm["sds"]["t_max"] == 1.0);
  CHECK(fm["sds"]["guidance_scale"] == 15.0);
  CHECK(fm["sds"]["n_denoise_steps"] == 3);
  CHECK(fm["sds"]["batch_size"] == 8);

  const auto im = app::default_config(app::Task::synth_impact);
  CHECK(im["optimizer"]["lr"] == 5e-3);
  CHECK(im["sds"]["t_min"] == 0.7);
  CHECK(im["sds"]["n_denoise_steps"] == 10);
  CHECK(im["impact"]["modes"] == 2048);
  CHECK(im["impact"]["lo_hz"] == 100.0);
  CHECK(im["impact"]["hi_hz"] == 18000.0);

  const auto sep = app::default_config(app::Task::separate);
  CHECK(sep["optimizer"]["lr"] == 5e-2);
  CHECK(sep["sds"]["t_min"] == 0.025);
  CHECK(sep["sds"]["t_max"] == 0.875);
  CHECK(sep["sds"]["guidance_scale"] == 60.0);
  CHECK(sep["sds"]["n_denoise_steps"] == 2);
  CHECK(sep["sds"]["batch_size"] == 10);
  CHECK(sep["separation"]["gamma"] == 0.02);
  CHECK(sep["clip"]["duration"] == 10.0);
  CHECK(sep["sds"]["window_sizes"] == json({1024, 2048, 4096}));
}

TEST_CASE("default configurations are pinned", "[app][config]") {
  // Changing a default must be a deliberate act; update these with it.
  CHECK(app::default_config_hash(app::Task::synth_fm) == 0x8fc93744888ebbb8ull);
  CHECK(app::default_config_hash(app::Task::synth_impact) == 0xfea8399ec0c6c45dull);
  CHECK(app::default_config_hash(app::Task::separate) == 0xa6b8ccbff89fdc08ull);
  CHECK(app::default_config_hash(app::Task::train_toy_prior) == 0x89b72176dad1abc6ull);
}

TEST_CASE("configuration errors are reported together", "[app][config]") {
  const auto msg = config_error({{"task", "separate"},
                                 {"out", ""},
                                 {"checkpoint", "/nonexistent/toy.json"},
                                 {"optimizer", {{"lr", -1.0}}},
                                 {"sds", {{"batch_size", 0}}},
                                 {"separation", {{"mixture", "/nonexistent/mix.wav"}}},
                                 {"bogus", 1}});
  CHECK(msg.find("invalid configuration") != std::string::npos);
  for (const char* part : {"out must name", "checkpoint not found", "optimizer.lr", "batch", "mixture file not found",
                           "at least two sources", "bogus"}) {
    INFO(part);
    CHECK(msg.find(part) != std::string::npos);
  }
}

TEST_CASE("unknown and mistyped keys are rejected", "[app][config]") {
  CHECK(config_error({{"task", "synth-fm"}, {"backend", "oracle"}, {"sds", {{"guidance", 3}}}}).find("sds.guidance") !=
        std::string::npos);
  CHECK_FALSE(config_error({{"task", "synth-fm"}, {"backend", "oracle"}, {"steps", "many"}}).empty());
  CHECK_FALSE(config_error({{"task", "synth-fm"}, {"backend", "warp"}}).empty());
  CHECK_FALSE(config_error({{"task", "dance"}}).empty());
  CHECK(config_error({{"task", "synth-fm"}, {"backend", "oracle"}}).empty());
}

TEST_CASE("layering merges objects and lets null overwrite", "[app][config]") {
  json base = {{"a", {{"x", 1}, {"y", 2}}}, {"b", 3}};
  app::deep_merge(base, {{"a", {{"y", nullptr}}}, {"c", {1, 2}}});
  CHECK(base == json({{"a", {{"x", 1}, {"y", nullptr}}}, {"b", 3}, {"c", {1, 2}}}));

  const auto dir = scratch("layering");
  std::ofstream(dir / "cfg.json") << R"({"task": "synth-fm", "backend": "oracle", "steps": 7, "sds": {"t_min": 0.3}})";
  const auto c = app::load_config(dir / "cfg.json", {{"steps", 9}});
  CHECK(c.steps == 9);
  CHECK(c.sds.t_min == 0.3);
  CHECK(c.sds.t_max == 1.0);
  CHECK(c.run_id == "synth-fm-seed0");
  CHECK(c.resolved["steps"] == 9);
  CHECK_THROWS_AS(app::load_config(dir / "missing.json", json::object()), ConfigError);
}

TEST_CASE("parameter checkpoints round-trip exactly", "[app][params]") {
  Rng rng(3);
  auto theta = fm_initial_params(3, rng).pack();
  theta[0] = 0.1;
  theta[1] = -1.0 / 3.0;
  const auto ck = fm_checkpoint(theta, 3, 250);
  const auto text = format_params(ck);
  CHECK(text.rfind("# audiosds parameters\nrenderer = fm\n", 0) == 0);
  const auto back = parse_params(text);
  CHECK(back == ck);
  CHECK(back.flatten() == theta);
  CHECK(back.get("step") == "250");

  const auto dir = scratch("params");
  write_params(ck, dir / "p.params");
  CHECK(read_params(dir / "p.params") == ck);

  CHECK_THROWS_AS(parse_params("renderer = fm\n[raw]\nlog_fm_matrix = 1 2 x\n"), FormatError);
  CHECK_THROWS_AS(parse_params("no equals sign here\n"), FormatError);
  CHECK_THROWS_AS(back.field("missing"), FormatError);
}

TEST_CASE("errors map to exit codes", "[app]") {
  CHECK(app::exit_code_for(ConfigError("x")) == app::kExitConfig);
  CHECK(app::exit_code_for(TransportError("x")) == app::kExitBackend);
  CHECK(app::exit_code_for(CapabilityError("x")) == app::kExitBackend);
  CHECK(app::exit_code_for(NumericAbort("x", 3, {})) == app::kExitNumeric);
  CHECK(app::exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("a run replays byte for byte from its config snapshot", "[app][determinism]") {
  const auto dir = scratch("replay");
  testing::tiny_toy_checkpoint().save(dir / "toy.json");
  const json overrides = {{"task", "synth-fm"},
                          {"checkpoint", (dir / "toy.json").string()},
                          {"class_id", 1},
                          {"out", (dir / "a").string()},
                          {"steps", 6},
                          {"checkpoint_every", 3},
                          {"clip", {{"duration", 0.25}}},
                          {"fm", {{"operators", 2}}},
                          {"sds", {{"batch_size", 2}, {"window_sizes", {128, 256}}}}};
  const auto a = app::run(app::load_config(std::nullopt, overrides));
  CHECK(a["steps"] == 6);
  for (const char* f : {"config.json", "summary.json", "run.log", "metrics.csv", "checkpoints/init.params",
                        "checkpoints/step_000003.params", "checkpoints/final.params", "audio/final.wav",
                        "plots/init_vs_final.png"}) {
    INFO(f);
    CHECK(fs::exists(dir / "a" / f));
  }
  const auto b = app::run(app::load_config(dir / "a/config.json", {{"out", (dir / "b").string()}}));
  CHECK(a == b);
  for (const char* f : {"run.log", "metrics.csv", "checkpoints/final.params", "audio/final.wav"}) {
    INFO(f);
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  // A different seed changes the trajectory.
  const auto c = app::run(app::load_config(dir / "a/config.json", {{"out", (dir / "c").string()}, {"seed", 5}}));
  CHECK(slurp(dir / "a/checkpoints/final.params") != slurp(dir / "c/checkpoints/final.params"));
}
