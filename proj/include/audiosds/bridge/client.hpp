#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>

#include "audiosds/bridge/protocol.hpp"
#include "audiosds/bridge/socket.hpp"
#include "audiosds/prior/prior.hpp"

namespace audiosds::bridge {

/// DiffusionPrior backed by a remote service. Requests on one connection
/// are serialized and matched to responses by request_id. Tensors cross
/// the wire as f32. add_noise and guidance combination run locally on the
/// advertised schedule; the decoder VJP is not part of the protocol.
class BridgePrior : public DiffusionPrior {
 public:
  explicit BridgePrior(const std::string& address) : address_(address), sock_(io_) {
    const auto [host, port] = split_address(address);
    try {
      tcp::resolver resolver(io_);
      boost::asio::connect(sock_, resolver.resolve(host, port));
    } catch (const boost::system::system_error& e) {
      throw TransportError("cannot reach prior bridge at " + address + ": " + e.what());
    }
    handshake_ = call("handshake", nlohmann::json::object());
    try {
      info_.latent_channels = handshake_.at("latent_channels").get<std::size_t>();
      info_.compression_factor = handshake_.at("compression_factor").get<std::size_t>();
      info_.sample_rate = handshake_.at("sample_rate").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("malformed handshake: ") + e.what());
    }
    schedule_ = schedule_from_json(handshake_.at("schedule_table"));
  }

  std::string name() const override { return "bridge"; }
  PriorInfo info() override { return info_; }
  const NoiseSchedule& schedule() override { return schedule_; }
  const nlohmann::json& handshake() const { return handshake_; }
  const std::string& address() const { return address_; }

  Latent encode(const Waveform& x) override {
    return latent_from_json(
        call("encode", {{"audio", waveform_json(x)}, {"sample_rate", x.sample_rate()}}).at("latent"));
  }

  Waveform decode(const Latent& h) override {
    const auto r = call("decode", {{"latent", latent_json(h)}});
    return waveform_from_json(r.at("audio"), r.value("sample_rate", info_.sample_rate));
  }

  Latent predict_noise(const Latent& z, double t, const Conditioning& cond) override {
    return latent_from_json(
        call("predict_noise", {{"cond", conditioning_json(cond)}, {"t", t}, {"z", latent_json(z)}}).at("eps"));
  }

  Latent denoise_multistep(const Latent& z, double t, const Conditioning& cond, int n_steps,
                           double guidance_scale) override {
    if (n_steps < 1) throw InvalidInput("denoising needs at least one step");
    const auto r = call("denoise_multistep", {{"cond", conditioning_json(cond)},
                                              {"guidance_scale", guidance_scale},
                                              {"n_steps", n_steps},
                                              {"t", t},
                                              {"z", latent_json(z)}});
    return latent_from_json(r.at("latent"));
  }

  /// Raw request/response exchange; returns the payload or throws the
  /// error envelope as an exception.
  nlohmann::json call(const std::string& op, nlohmann::json payload) {
    std::lock_guard lock(mutex_);
    const auto id = ++next_id_;
    write_bytes(sock_, frame_json(request(op, std::move(payload), id)));
    auto body = read_frame(sock_);
    if (!body) throw TransportError("prior bridge closed the connection during '" + op + "'");
    nlohmann::json resp;
    try {
      resp = nlohmann::json::parse(*body);
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError("response to '" + op + "' is not JSON");
    }
    if (resp.value("request_id", std::uint64_t{0}) != id) throw ProtocolError("response request_id does not match");
    if (resp.contains("error")) {
      const auto code = resp["error"].value("code", std::string("unknown"));
      const auto msg = op + ": " + resp["error"].value("message", std::string());
      if (code == "capability") throw CapabilityError(msg);
      if (code == "invalid_input") throw InvalidInput(msg);
      throw ProtocolError(code + ": " + msg);
    }
    if (!resp.contains("payload")) throw ProtocolError("response to '" + op + "' has no payload");
    return resp["payload"];
  }

 private:
  std::string address_;
  boost::asio::io_context io_;
  tcp::socket sock_;
  std::mutex mutex_;
  std::uint64_t next_id_ = 0;
  nlohmann::json handshake_;
  PriorInfo info_;
  NoiseSchedule schedule_;
};

}  // namespace audiosds::bridge
