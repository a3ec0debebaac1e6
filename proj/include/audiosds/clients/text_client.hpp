#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <httplib.h>
// <resolv.h> defines _res, which collides with parameter names in Eigen.
#ifdef _res
#undef _res
#endif
#include <nlohmann/json.hpp>

#include "audiosds/base64.hpp"
#include "audiosds/error.hpp"
#include "audiosds/random.hpp"
#include "audiosds/signal/wav.hpp"

// Text-in, text-out service clients (captioner, LLM, CLAP scorer): a live
// HTTP POST client and canned mocks for offline runs.

namespace audiosds {

class TextClient {
 public:
  virtual ~TextClient() = default;
  virtual std::string post(const std::string& payload) = 0;
  virtual std::string name() const = 0;
};

struct HttpClientOptions {
  int attempts = 3;
  std::chrono::milliseconds timeout{10000};
  std::chrono::milliseconds backoff{200};
  std::string content_type = "text/plain; charset=utf-8";
};

/// POSTs the payload to a URL such as http://host:port/path and returns the
/// body of a 200 response. Failures are retried; the final error carries the
/// attempt count.
class HttpTextClient : public TextClient {
 public:
  HttpTextClient(std::string url, std::optional<std::string> token = std::nullopt, HttpClientOptions opt = {})
      : url_(std::move(url)), token_(std::move(token)), opt_(opt) {
    const auto scheme = url_.find("://");
    if (scheme == std::string::npos || url_.substr(0, scheme) != "http")
      throw ConfigError("only http:// endpoints are supported: '" + url_ + "'");
    const auto path = url_.find('/', scheme + 3);
    base_ = url_.substr(0, path);
    path_ = path == std::string::npos ? "/" : url_.substr(path);
    if (opt_.attempts < 1) throw ConfigError("HTTP client needs at least one attempt");
  }

  /// URL from `var`, optional bearer token from `var`_TOKEN; nullptr when
  /// the variable is unset.
  static std::unique_ptr<HttpTextClient> from_env(const std::string& var, HttpClientOptions opt = {}) {
    const char* url = std::getenv(var.c_str());
    if (!url || !*url) return nullptr;
    std::optional<std::string> token;
    if (const char* t = std::getenv((var + "_TOKEN").c_str()); t && *t) token = t;
    return std::make_unique<HttpTextClient>(url, token, opt);
  }

  std::string name() const override { return "http:" + url_; }

  std::string post(const std::string& payload) override {
    std::string last;
    for (int attempt = 1; attempt <= opt_.attempts; ++attempt) {
      httplib::Client cli(base_);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opt_.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opt_.timeout - secs);
      cli.set_connection_timeout(secs.count(), usecs.count());
      cli.set_read_timeout(secs.count(), usecs.count());
      httplib::Headers headers;
      if (token_) headers.emplace("Authorization", "Bearer " + *token_);
      auto res = cli.Post(path_, headers, payload, opt_.content_type);
      if (res && res->status == 200) return res->body;
      last = res ? "HTTP status " + std::to_string(res->status) : httplib::to_string(res.error());
      if (attempt < opt_.attempts) std::this_thread::sleep_for(opt_.backoff * attempt);
    }
    throw ClientError(url_ + ": " + last, opt_.attempts);
  }

 private:
  std::string url_, base_, path_;
  std::optional<std::string> token_;
  HttpClientOptions opt_;
};

/// Canned responses looked up by a key derived from the payload (the whole
/// payload by default), with an optional fallback.
class MockTextClient : public TextClient {
 public:
  using KeyFn = std::function<std::string(const std::string&)>;

  explicit MockTextClient(std::string name = "mock", KeyFn key = {}) : name_(std::move(name)), key_(std::move(key)) {}

  /// `<key>.txt` files become responses; `default.txt` is the fallback.
  static MockTextClient from_directory(const std::filesystem::path& dir, std::string name = "mock", KeyFn key = {}) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("mock fixture directory not found: " + dir.string());
    MockTextClient m(std::move(name), std::move(key));
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.path().extension() != ".txt") continue;
      std::ifstream f(e.path(), std::ios::binary);
      std::stringstream ss;
      ss << f.rdbuf();
      if (e.path().stem() == "default")
        m.fallback_ = ss.str();
      else
        m.responses_[e.path().stem().string()] = ss.str();
    }
    return m;
  }

  MockTextClient& respond(const std::string& key, std::string response) {
    responses_[key] = std::move(response);
    return *this;
  }
  MockTextClient& fallback(std::string response) {
    fallback_ = std::move(response);
    return *this;
  }

  std::string name() const override { return name_; }

  std::string post(const std::string& payload) override {
    ++calls_;
    last_payload_ = payload;
    const auto k = key_ ? key_(payload) : payload;
    if (auto it = responses_.find(k); it != responses_.end()) return it->second;
    if (fallback_) return *fallback_;
    throw ClientError(name_ + ": no canned response for key '" + k.substr(0, 64) + "'", 1);
  }

  std::size_t calls() const { return calls_; }
  const std::string& last_payload() const { return last_payload_; }

 private:
  std::string name_;
  KeyFn key_;
  std::map<std::string, std::string> responses_;
  std::optional<std::string> fallback_;
  std::size_t calls_ = 0;
  std::string last_payload_;
};

/// Hex FNV-1a of the float32 WAV encoding; the key audio mocks use.
inline std::string audio_hash(const Waveform& w) {
  const auto bytes = wav_encode(w, WavEncoding::float32);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return buf;
}

/// JSON request body carrying audio to a captioner or scorer.
inline nlohmann::json audio_request(const std::string& task, const Waveform& w) {
  return {{"task", task},
          {"audio_hash", audio_hash(w)},
          {"sample_rate", w.sample_rate()},
          {"frames", w.frames()},
          {"wav_base64", base64_encode(wav_encode(w, WavEncoding::float32))}};
}

/// Key function for mocks answering audio requests by their hash.
inline std::string audio_hash_key(const std::string& payload) {
  try {
    return nlohmann::json::parse(payload).at("audio_hash").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    return payload;
  }
}

}  // namespace audiosds
