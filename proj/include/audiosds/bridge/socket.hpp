#pragma once

#include <array>
#include <optional>
#include <string>

#include <boost/asio.hpp>

#include "audiosds/bridge/protocol.hpp"
#include "audiosds/error.hpp"

namespace audiosds::bridge {

using boost::asio::ip::tcp;

/// Next frame body, or nullopt on a clean close before a header.
inline std::optional<std::string> read_frame(tcp::socket& sock) {
  std::array<unsigned char, 4> header{};
  boost::system::error_code ec;
  const auto got = boost::asio::read(sock, boost::asio::buffer(header), ec);
  if (ec == boost::asio::error::eof && got == 0) return std::nullopt;
  if (ec) throw TransportError("reading frame header: " + ec.message());
  const auto n = frame_length(header.data());
  if (n > kMaxFrameBytes) throw ProtocolError("frame length " + std::to_string(n) + " exceeds the limit");
  std::string body(n, '\0');
  boost::asio::read(sock, boost::asio::buffer(body), ec);
  if (ec) throw TransportError("reading frame body: " + ec.message());
  return body;
}

inline void write_bytes(tcp::socket& sock, const std::string& bytes) {
  boost::system::error_code ec;
  boost::asio::write(sock, boost::asio::buffer(bytes), ec);
  if (ec) throw TransportError("writing frame: " + ec.message());
}

/// "host:port" split; port must be numeric.
inline std::pair<std::string, std::string> split_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size())
    throw ConfigError("bridge address must be HOST:PORT, got '" + addr + "'");
  const auto port = addr.substr(colon + 1);
  if (port.find_first_not_of("0123456789") != std::string::npos) throw ConfigError("bad port in '" + addr + "'");
  return {addr.substr(0, colon), port};
}

}  // namespace audiosds::bridge
