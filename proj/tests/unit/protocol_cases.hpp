#pragma once

#include <string>
#include <vector>

#include "audiosds/bridge/protocol.hpp"

// Requests behind the golden byte streams in fixtures/protocol. Values are
// exactly representable in f32 so the echo responses are predictable.
namespace audiosds::testing {

struct ProtocolCase {
  std::string name;
  nlohmann::json request;
};

inline std::vector<ProtocolCase> protocol_cases() {
  using namespace audiosds::bridge;
  const std::vector<double> audio = {0.0, 0.5, -0.25, 1.0, 0.125, -1.0, 0.75, 3.0517578125e-05};
  const std::vector<double> lat6 = {1.5, -2.0, 0.0625, 4.0, -0.5, 8.0};
  const std::vector<double> lat4 = {0.25, -0.75, 2.0, -4.0};
  auto bad = tensor_json({2, 2}, lat4);
  bad["shape"] = {3, 2};
  return {
      {"01_handshake", request("handshake", nlohmann::json::object(), 1)},
      {"02_schedule", request("schedule", nlohmann::json::object(), 2)},
      {"03_encode", request("encode", {{"audio", tensor_json({2, 4}, audio)}, {"sample_rate", 44100}}, 3)},
      {"04_decode", request("decode", {{"latent", tensor_json({2, 3}, lat6)}}, 4)},
      {"05_predict_noise_prompt",
       request("predict_noise", {{"cond", {{"prompt", "traffic"}}}, {"t", 0.5}, {"z", tensor_json({3, 2}, lat6)}}, 5)},
      {"06_predict_noise_uncond",
       request("predict_noise", {{"cond", nullptr}, {"t", 0.25}, {"z", tensor_json({2, 2}, lat4)}}, 6)},
      {"07_denoise_multistep", request("denoise_multistep",
                                       {{"cond", {{"prompt", "saxophone"}}},
                                        {"guidance_scale", 60.0},
                                        {"n_steps", 2},
                                        {"t", 0.875},
                                        {"z", tensor_json({2, 2}, lat4)}},
                                       7)},
      {"08_unknown_op", request("train", nlohmann::json::object(), 8)},
      {"09_bad_tensor", request("predict_noise", {{"cond", nullptr}, {"t", 0.5}, {"z", bad}}, 9)},
  };
}

}  // namespace audiosds::testing
