#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <boost/beast/core/detail/base64.hpp>

namespace audiosds {

inline std::string base64_encode(std::string_view bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

/// Strict decode of padded base64; nullopt on any malformed input.
inline std::optional<std::string> base64_decode(std::string_view text) {
  namespace b64 = boost::beast::detail::base64;
  if (text.size() % 4 != 0) return std::nullopt;
  std::string out(b64::decoded_size(text.size()), '\0');
  const auto written = b64::decode(out.data(), text.data(), text.size()).first;
  out.resize(written);
  // The decoder stops quietly at bad characters; re-encoding catches that
  // as well as non-canonical padding.
  if (base64_encode(out) != text) return std::nullopt;
  return out;
}

}  // namespace audiosds
