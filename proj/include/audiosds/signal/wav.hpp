#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "audiosds/error.hpp"
#include "audiosds/signal/waveform.hpp"

// RIFF/WAVE reader and writer. Little-endian PCM-16 and IEEE float-32.

namespace audiosds {

static_assert(std::endian::native == std::endian::little, "WAV codec assumes a little-endian host");

enum class WavEncoding { pcm16, float32 };

namespace detail {

constexpr std::uint16_t kWavPcm = 1;
constexpr std::uint16_t kWavFloat = 3;
constexpr std::uint16_t kWavExtensible = 0xFFFE;

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
  T read(const char* what) {
    if (pos_ + sizeof(T) > bytes_.size()) throw FormatError(std::string("truncated ") + what, pos_);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view tag(const char* what) {
    if (pos_ + 4 > bytes_.size()) throw FormatError(std::string("truncated ") + what, pos_);
    auto t = bytes_.substr(pos_, 4);
    pos_ += 4;
    return t;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void skip(std::size_t n) { pos_ += n; }
  std::string_view bytes() const { return bytes_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Serializes a waveform to an in-memory WAV file.
inline std::string wav_encode(const Waveform& w, WavEncoding enc = WavEncoding::float32) {
  if (w.empty()) throw InvalidInput("cannot encode an empty waveform");
  const std::uint16_t channels = 2;
  const std::uint16_t bits = enc == WavEncoding::pcm16 ? 16 : 32;
  const std::uint16_t block_align = channels * bits / 8;
  const auto data_bytes = static_cast<std::uint32_t>(w.frames() * block_align);
  std::string out;
  out.reserve(44 + data_bytes);
  out.append("RIFF");
  detail::put<std::uint32_t>(out, 36 + data_bytes);
  out.append("WAVE");
  out.append("fmt ");
  detail::put<std::uint32_t>(out, 16);
  detail::put<std::uint16_t>(out, enc == WavEncoding::pcm16 ? detail::kWavPcm : detail::kWavFloat);
  detail::put<std::uint16_t>(out, channels);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate()) * block_align);
  detail::put<std::uint16_t>(out, block_align);
  detail::put<std::uint16_t>(out, bits);
  out.append("data");
  detail::put<std::uint32_t>(out, data_bytes);
  for (std::size_t n = 0; n < w.frames(); ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = w(c, n);
      if (enc == WavEncoding::pcm16) {
        const double q = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
        detail::put<std::int16_t>(out, static_cast<std::int16_t>(q));
      } else {
        detail::put<float>(out, static_cast<float>(v));
      }
    }
  }
  return out;
}

/// Parses an in-memory WAV file. Mono input is duplicated to stereo.
inline Waveform wav_decode(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.tag("RIFF header") != "RIFF") throw FormatError("missing RIFF tag", 0);
  r.read<std::uint32_t>("RIFF size");
  if (r.tag("WAVE tag") != "WAVE") throw FormatError("missing WAVE tag", 8);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  while (r.remaining() > 0) {
    const std::size_t chunk_at = r.pos();
    const auto id = r.tag("chunk id");
    const auto size = r.read<std::uint32_t>("chunk size");
    const std::size_t body = r.pos();
    if (id == "fmt ") {
      if (size < 16) throw FormatError("fmt chunk too short", chunk_at);
      format = r.read<std::uint16_t>("format tag");
      channels = r.read<std::uint16_t>("channel count");
      rate = r.read<std::uint32_t>("sample rate");
      r.read<std::uint32_t>("byte rate");
      block_align = r.read<std::uint16_t>("block align");
      bits = r.read<std::uint16_t>("bits per sample");
      if (format == detail::kWavExtensible) {
        if (size < 40) throw FormatError("extensible fmt chunk too short", chunk_at);
        r.read<std::uint16_t>("cb size");
        r.read<std::uint16_t>("valid bits");
        r.read<std::uint32_t>("channel mask");
        format = r.read<std::uint16_t>("sub-format");
      }
      if (format != detail::kWavPcm && format != detail::kWavFloat)
        throw FormatError("unsupported codec " + std::to_string(format), body);
      if ((format == detail::kWavPcm && bits != 16) || (format == detail::kWavFloat && bits != 32))
        throw FormatError("unsupported bit depth " + std::to_string(bits), body + 14);
      if (channels != 1 && channels != 2)
        throw FormatError("unsupported channel count " + std::to_string(channels), body + 2);
      if (rate == 0) throw FormatError("zero sample rate", body + 4);
      if (block_align != channels * bits / 8) throw FormatError("inconsistent block align", body + 12);
      have_fmt = true;
      r = detail::ByteReader(bytes);
      r.skip(body + size + (size & 1u));
      continue;
    }
    if (id == "data") {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk", chunk_at);
      if (size > r.remaining()) throw FormatError("data chunk extends past end of file", body);
      if (size % block_align != 0) throw FormatError("data chunk is not a whole number of frames", body);
      const std::size_t frames = size / block_align;
      if (frames == 0) throw FormatError("empty data chunk", body);
      Waveform w(frames, static_cast<int>(rate));
      for (std::size_t n = 0; n < frames; ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
          double v = format == detail::kWavPcm ? r.read<std::int16_t>("sample") / 32768.0
                                               : static_cast<double>(r.read<float>("sample"));
          if (!std::isfinite(v)) throw FormatError("non-finite sample", r.pos() - 4);
          w(c, n) = v;
          if (channels == 1) w(1, n) = v;
        }
      }
      return w;
    }
    if (size > r.remaining()) throw FormatError("chunk extends past end of file", body);
    r.skip(size + (size & 1u));
  }
  throw FormatError(have_fmt ? "missing data chunk" : "missing fmt chunk", bytes.size());
}

inline void wav_write(const Waveform& w, const std::filesystem::path& path,
                      WavEncoding enc = WavEncoding::float32) {
  const auto bytes = wav_encode(w, enc);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InvalidInput("failed writing " + path.string());
}

inline Waveform wav_read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return wav_decode(bytes);
}

}  // namespace audiosds
