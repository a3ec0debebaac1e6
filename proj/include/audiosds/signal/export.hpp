#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "audiosds/error.hpp"
#include "audiosds/signal/spectrogram.hpp"

// Spectrogram export: long-form CSV and dB-scaled PNG images.

namespace audiosds {

/// Columns: freq_bin, frame, channel, magnitude. One file per grid.
inline void write_spectrogram_csv(const MagnitudeGrid& g, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw InvalidInput("cannot open " + path.string());
  f << "freq_bin,frame,channel,magnitude\n";
  char buf[64];
  for (std::size_t c = 0; c < Waveform::kChannels; ++c)
    for (std::size_t fr = 0; fr < g.frames; ++fr)
      for (std::size_t k = 0; k < g.bins; ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", g.at(c, fr, k));
        f << k << ',' << fr << ',' << c << ',' << buf << '\n';
      }
}

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {}

  void set(std::size_t x, std::size_t y, std::array<std::uint8_t, 3> rgb) {
    auto* p = &pixels[(y * width + x) * 3];
    p[0] = rgb[0];
    p[1] = rgb[1];
    p[2] = rgb[2];
  }
};

// Viridis, sampled at 5 stops.
inline std::array<std::uint8_t, 3> colormap(double v) {
  static constexpr std::array<std::array<double, 3>, 5> stops{{
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  v = std::clamp(v, 0.0, 1.0) * 4.0;
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(v), 3);
  const double t = v - static_cast<double>(i);
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c)
    out[c] = static_cast<std::uint8_t>(std::lround(stops[i][c] * (1 - t) + stops[i + 1][c] * t));
  return out;
}

/// One channel of a grid as an image: x = frame, y = frequency (low at the
/// bottom), colour = 20 log10(magnitude) clamped to [db_min, db_max].
inline RgbImage spectrogram_image(const MagnitudeGrid& g, std::size_t channel, double db_min, double db_max) {
  RgbImage img(g.frames, g.bins);
  const double span = db_max - db_min;
  for (std::size_t f = 0; f < g.frames; ++f)
    for (std::size_t k = 0; k < g.bins; ++k) {
      const double db = 20.0 * std::log10(std::max(g.at(channel, f, k), 1e-12));
      img.set(f, g.bins - 1 - k, colormap((db - db_min) / span));
    }
  return img;
}

/// Panels placed left to right with a gap, top-aligned.
inline RgbImage hconcat(const std::vector<RgbImage>& panels, std::size_t gap = 4) {
  std::size_t w = 0, h = 0;
  for (const auto& p : panels) {
    w += p.width;
    h = std::max(h, p.height);
  }
  if (!panels.empty()) w += gap * (panels.size() - 1);
  RgbImage out(w, h, 255);
  std::size_t x0 = 0;
  for (const auto& p : panels) {
    for (std::size_t y = 0; y < p.height; ++y)
      std::copy_n(&p.pixels[y * p.width * 3], p.width * 3, &out.pixels[(y * w + x0) * 3]);
    x0 += p.width + gap;
  }
  return out;
}

inline void write_png(const RgbImage& img, const std::filesystem::path& path) {
  if (img.width == 0 || img.height == 0) throw InvalidInput("empty image");
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw InvalidInput("cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw InvalidInput("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InvalidInput("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(&img.pixels[y * img.width * 3]));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Side-by-side dB spectrograms (left channel, first scale) sharing one colour
/// scale, e.g. initialisation vs final render.
inline void write_spectrogram_comparison_png(const std::vector<const Waveform*>& panels, std::size_t window,
                                             const std::filesystem::path& path, double db_range = 80.0) {
  std::vector<MagnitudeGrid> grids;
  double peak = 1e-12;
  for (const auto* w : panels) {
    grids.push_back(stft_magnitude(*w, window, window / 4));
    for (double v : grids.back().values) peak = std::max(peak, v);
  }
  const double db_max = 20.0 * std::log10(peak);
  std::vector<RgbImage> imgs;
  for (const auto& g : grids) imgs.push_back(spectrogram_image(g, 0, db_max - db_range, db_max));
  write_png(hconcat(imgs), path);
}

}  // namespace audiosds
