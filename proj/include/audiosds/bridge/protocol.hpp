#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "audiosds/base64.hpp"
#include "audiosds/error.hpp"
#include "audiosds/prior/latent.hpp"
#include "audiosds/prior/prior.hpp"
#include "audiosds/prior/schedule.hpp"
#include "audiosds/signal/waveform.hpp"

// Wire format shared with the remote prior service.
//
// Frame:    u32 big-endian byte length, then that many bytes of JSON.
// JSON:     canonical form, i.e. keys sorted and no whitespace.
// Request:  {"op", "payload", "request_id"}
// Response: {"op", "payload", "request_id"} or {"error": {"code", "message"}, "op", "request_id"}
// Tensor:   {"data": base64 of little-endian f32, "dtype": "f32", "shape": [dims]}
//
// Ops: handshake, schedule, encode, decode, predict_noise, denoise_multistep.

namespace audiosds::bridge {

inline constexpr std::uint32_t kMaxFrameBytes = 512u << 20;
inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kScheduleTablePoints = 256;

inline const std::vector<std::string>& known_ops() {
  static const std::vector<std::string> ops = {"handshake", "schedule",      "encode",
                                               "decode",    "predict_noise", "denoise_multistep"};
  return ops;
}

inline std::string canonical(const nlohmann::json& j) { return j.dump(); }

inline std::string frame(std::string_view body) {
  if (body.size() > kMaxFrameBytes) throw ProtocolError("frame exceeds the size limit");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out(4, '\0');
  out[0] = static_cast<char>(n >> 24);
  out[1] = static_cast<char>(n >> 16);
  out[2] = static_cast<char>(n >> 8);
  out[3] = static_cast<char>(n);
  out.append(body);
  return out;
}

inline std::uint32_t frame_length(const unsigned char* header) {
  return (std::uint32_t(header[0]) << 24) | (std::uint32_t(header[1]) << 16) | (std::uint32_t(header[2]) << 8) |
         std::uint32_t(header[3]);
}

inline std::string frame_json(const nlohmann::json& j) { return frame(canonical(j)); }

inline nlohmann::json request(const std::string& op, nlohmann::json payload, std::uint64_t request_id) {
  return {{"op", op}, {"payload", std::move(payload)}, {"request_id", request_id}};
}

inline nlohmann::json error_response(const std::string& op, std::uint64_t request_id, const std::string& code,
                                     const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}, {"op", op}, {"request_id", request_id}};
}

// ---- tensors ----

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;  // f32-representable after a round trip
};

inline nlohmann::json tensor_json(const std::vector<std::size_t>& shape, std::span<const double> values) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  if (n != values.size()) throw InvalidInput("tensor shape does not match its data");
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>((u >> (8 * b)) & 0xff);
  }
  return {{"data", base64_encode(bytes)}, {"dtype", "f32"}, {"shape", shape}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  try {
    if (j.at("dtype").get<std::string>() != "f32") throw ProtocolError("unsupported tensor dtype");
    Tensor t;
    t.shape = j.at("shape").get<std::vector<std::size_t>>();
    std::size_t n = 1;
    for (auto d : t.shape) n *= d;
    const auto bytes = base64_decode(j.at("data").get<std::string>());
    if (!bytes) throw ProtocolError("tensor data is not valid base64");
    if (bytes->size() != 4 * n) throw ProtocolError("tensor data length does not match its shape");
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= std::uint32_t(static_cast<unsigned char>((*bytes)[4 * i + b])) << (8 * b);
      float f;
      std::memcpy(&f, &u, 4);
      t.values[i] = f;
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed tensor: ") + e.what());
  }
}

inline nlohmann::json latent_json(const Latent& h) { return tensor_json({h.channels, h.frames}, h.values); }

inline Latent latent_from_json(const nlohmann::json& j) {
  auto t = tensor_from_json(j);
  if (t.shape.size() != 2) throw ProtocolError("latent tensor must be 2-D");
  return Latent(t.shape[0], t.shape[1], std::move(t.values));
}

inline nlohmann::json waveform_json(const Waveform& w) {
  return tensor_json({Waveform::kChannels, w.frames()}, w.flat());
}

inline Waveform waveform_from_json(const nlohmann::json& j, int sample_rate) {
  auto t = tensor_from_json(j);
  if (t.shape.size() != 2 || t.shape[0] != Waveform::kChannels) throw ProtocolError("audio tensor must be 2 x T");
  return Waveform::from_flat(t.values, sample_rate);
}

// ---- small payload pieces ----

inline nlohmann::json conditioning_json(const Conditioning& c) {
  if (c.prompt) return {{"prompt", *c.prompt}};
  if (c.class_id) return {{"class_id", *c.class_id}};
  return nullptr;
}

inline Conditioning conditioning_from_json(const nlohmann::json& j) {
  if (j.is_null()) return Conditioning::null();
  if (j.contains("prompt")) return Conditioning::text(j.at("prompt").get<std::string>());
  if (j.contains("class_id")) return Conditioning::label(j.at("class_id").get<int>());
  throw ProtocolError("conditioning needs a prompt or a class_id");
}

inline nlohmann::json schedule_json(const NoiseSchedule& s) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& p : s.sample(kScheduleTablePoints)) table.push_back({p.t, p.alpha, p.sigma});
  return table;
}

inline NoiseSchedule schedule_from_json(const nlohmann::json& table) {
  std::vector<NoiseSchedule::Point> pts;
  try {
    for (const auto& row : table) pts.push_back({row.at(0).get<double>(), row.at(1).get<double>(), row.at(2).get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed schedule table: ") + e.what());
  }
  try {
    return NoiseSchedule::from_table(std::move(pts));
  } catch (const InvalidInput& e) {
    throw ProtocolError(std::string("bad schedule table: ") + e.what());
  }
}

inline nlohmann::json handshake_json(const PriorInfo& info, const NoiseSchedule& s, const std::string& mode) {
  return {{"compression_factor", info.compression_factor},
          {"latent_channels", info.latent_channels},
          {"mode", mode},
          {"protocol_version", kProtocolVersion},
          {"sample_rate", info.sample_rate},
          {"schedule_table", schedule_json(s)}};
}

}  // namespace audiosds::bridge
