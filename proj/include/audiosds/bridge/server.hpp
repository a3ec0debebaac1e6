#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "audiosds/bridge/protocol.hpp"
#include "audiosds/bridge/socket.hpp"
#include "audiosds/prior/prior.hpp"

// In-process server for the wire protocol: echo mode for conformance tests,
// or any DiffusionPrior behind the socket.

namespace audiosds::bridge {

/// Turns one request body into one response body. Echo mode answers with
/// fixed 2-channel, compression-1 metadata and returns tensors unchanged.
class RequestHandler {
 public:
  explicit RequestHandler(DiffusionPrior* prior = nullptr) : prior_(prior) {}

  bool echo() const { return prior_ == nullptr; }

  std::string handle(const std::string& body) {
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError("request is not JSON");
    }
    if (!req.is_object() || !req.contains("op") || !req.contains("request_id") || !req["op"].is_string() ||
        !req["request_id"].is_number_unsigned())
      throw ProtocolError("request lacks op or request_id");
    const auto op = req["op"].get<std::string>();
    const auto id = req["request_id"].get<std::uint64_t>();
    const nlohmann::json payload = req.value("payload", nlohmann::json::object());
    const auto& ops = known_ops();
    if (std::find(ops.begin(), ops.end(), op) == ops.end())
      return canonical(error_response(op, id, "unknown_op", "unknown op '" + op + "'"));
    try {
      return canonical({{"op", op}, {"payload", dispatch(op, payload)}, {"request_id", id}});
    } catch (const CapabilityError& e) {
      return canonical(error_response(op, id, "capability", e.what()));
    } catch (const InvalidInput& e) {
      return canonical(error_response(op, id, "invalid_input", e.what()));
    } catch (const ProtocolError& e) {
      return canonical(error_response(op, id, "bad_request", e.what()));
    } catch (const nlohmann::json::exception& e) {
      return canonical(error_response(op, id, "bad_request", e.what()));
    } catch (const Error& e) {
      return canonical(error_response(op, id, "backend_error", e.what()));
    }
  }

 private:
  PriorInfo info() { return prior_ ? prior_->info() : PriorInfo{Waveform::kChannels, 1, kDefaultSampleRate}; }
  const NoiseSchedule& schedule() { return prior_ ? prior_->schedule() : echo_schedule_; }

  nlohmann::json dispatch(const std::string& op, const nlohmann::json& p) {
    if (op == "handshake") return handshake_json(info(), schedule(), echo() ? "echo" : prior_->name());
    if (op == "schedule") return {{"schedule_table", schedule_json(schedule())}};
    if (op == "encode") {
      if (echo()) {
        auto t = tensor_from_json(p.at("audio"));
        return {{"latent", tensor_json(t.shape, t.values)}};
      }
      const auto x = waveform_from_json(p.at("audio"), p.at("sample_rate").get<int>());
      return {{"latent", latent_json(prior_->encode(x))}};
    }
    if (op == "decode") {
      if (echo()) {
        auto t = tensor_from_json(p.at("latent"));
        return {{"audio", tensor_json(t.shape, t.values)}, {"sample_rate", info().sample_rate}};
      }
      const auto x = prior_->decode(latent_from_json(p.at("latent")));
      return {{"audio", waveform_json(x)}, {"sample_rate", x.sample_rate()}};
    }
    if (op == "predict_noise" || op == "denoise_multistep") {
      const auto z = latent_from_json(p.at("z"));
      const double t = p.at("t").get<double>();
      const auto cond = conditioning_from_json(p.at("cond"));
      if (op == "predict_noise") return {{"eps", latent_json(echo() ? z : prior_->predict_noise(z, t, cond))}};
      const int n = p.at("n_steps").get<int>();
      const double s = p.at("guidance_scale").get<double>();
      if (n < 1) throw InvalidInput("denoising needs at least one step");
      return {{"latent", latent_json(echo() ? z : prior_->denoise_multistep(z, t, cond, n, s))}};
    }
    throw ProtocolError("unknown op '" + op + "'");
  }

  DiffusionPrior* prior_;
  NoiseSchedule echo_schedule_ = NoiseSchedule::cosine();
};

/// TCP server on 127.0.0.1 (ephemeral port by default). Connections are
/// served one at a time on a single thread, which is also the single
/// inference lane. Malformed frames close the connection; the reason is
/// kept in `log()`.
class LoopbackServer {
 public:
  explicit LoopbackServer(DiffusionPrior* prior = nullptr, unsigned short port = 0)
      : handler_(prior), acceptor_(io_, tcp::endpoint(boost::asio::ip::make_address("127.0.0.1"), port)) {
    port_ = acceptor_.local_endpoint().port();
    thread_ = std::thread([this] { run(); });
  }

  ~LoopbackServer() { stop(); }

  LoopbackServer(const LoopbackServer&) = delete;
  LoopbackServer& operator=(const LoopbackServer&) = delete;

  unsigned short port() const { return port_; }
  std::string address() const { return "127.0.0.1:" + std::to_string(port_); }

  void stop() {
    if (stopping_.exchange(true)) return;
    // Wake the blocking accept with a throwaway connection.
    try {
      boost::asio::io_context io;
      tcp::socket s(io);
      s.connect(tcp::endpoint(boost::asio::ip::make_address("127.0.0.1"), port_));
    } catch (const std::exception&) {
    }
    if (thread_.joinable()) thread_.join();
  }

  std::vector<std::string> log() const {
    std::lock_guard lock(log_mutex_);
    return log_;
  }

 private:
  void note(const std::string& s) {
    std::lock_guard lock(log_mutex_);
    log_.push_back(s);
  }

  void run() {
    while (!stopping_) {
      tcp::socket sock(io_);
      boost::system::error_code ec;
      acceptor_.accept(sock, ec);
      if (ec || stopping_) break;
      serve(sock);
    }
  }

  void serve(tcp::socket& sock) {
    try {
      while (auto body = read_frame(sock)) {
        std::string reply;
        try {
          reply = handler_.handle(*body);
        } catch (const ProtocolError& e) {
          note(std::string("closing connection: ") + e.what());
          return;
        }
        write_bytes(sock, frame(reply));
      }
    } catch (const ProtocolError& e) {
      note(std::string("closing connection: ") + e.what());
    } catch (const TransportError& e) {
      note(std::string("connection dropped: ") + e.what());
    }
  }

  RequestHandler handler_;
  boost::asio::io_context io_;
  tcp::acceptor acceptor_;
  unsigned short port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread thread_;
  mutable std::mutex log_mutex_;
  std::vector<std::string> log_;
};

}  // namespace audiosds::bridge
