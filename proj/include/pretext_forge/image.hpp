#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pretext_forge/error.hpp"

namespace pforge {

/// 8-bit interleaved RGB raster, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {
    if (w < 1 || h < 1) throw Error(ErrorCode::InvalidArgument, "image dimensions must be positive");
  }

  std::uint8_t& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  std::array<std::uint8_t, 3> pixel(int y, int x) const { return {at(y, x, 0), at(y, x, 1), at(y, x, 2)}; }
  void set(int y, int x, std::array<std::uint8_t, 3> rgb) {
    for (int c = 0; c < 3; ++c) at(y, x, c) = rgb[c];
  }

  bool empty() const { return pixels.empty(); }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Single-channel image with values in [0, 1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// a/b chroma channels of CIE Lab, interleaved, in Lab units clamped to [-128, 127].
struct AbImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  AbImage() = default;
  AbImage(int w, int h, double fill = 0.0) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 2, fill) {}

  double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 2 + c]; }
  double at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 2 + c]; }
  friend bool operator==(const AbImage&, const AbImage&) = default;
};

/// Bilinear resize with half-pixel centers; output is rounded back to 8 bits.
inline RgbImage resize_bilinear(const RgbImage& src, int out_w, int out_h) {
  if (src.width == out_w && src.height == out_h) return src;
  RgbImage out(out_w, out_h);
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = src.at(y0, x0, c) * (1 - wx) + src.at(y0, x1, c) * wx;
        const double bot = src.at(y1, x0, c) * (1 - wx) + src.at(y1, x1, c) * wx;
        const double v = top * (1 - wy) + bot * wy;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

/// Copies the w x h window whose top-left corner is (x0, y0).
inline RgbImage crop(const RgbImage& src, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || x0 + w > src.width || y0 + h > src.height)
    throw Error(ErrorCode::InvalidArgument, "crop window outside image");
  RgbImage out(w, h);
  for (int y = 0; y < h; ++y) {
    const auto* row = &src.pixels[(static_cast<std::size_t>(y0 + y) * src.width + x0) * 3];
    std::copy(row, row + static_cast<std::size_t>(w) * 3, &out.pixels[static_cast<std::size_t>(y) * w * 3]);
  }
  return out;
}

}  // namespace pforge
