#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pretext_forge/error.hpp"
#include "pretext_forge/image.hpp"

namespace pforge::color {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

// Linear sRGB -> XYZ for the D65 white point (IEC 61966-2-1, 7 digits).
inline constexpr Mat3 kRgbToXyz{{{0.4124564, 0.3575761, 0.1804375},
                                 {0.2126729, 0.7151522, 0.0721750},
                                 {0.0193339, 0.1191920, 0.9503041}}};

inline constexpr double kLabEpsilon = 216.0 / 24389.0;
inline constexpr double kLabKappa = 24389.0 / 27.0;
/// Divisor that maps Lab a/b into roughly [-1, 1] for the loss functions.
inline constexpr double kAbScale = 128.0;

namespace detail {

constexpr Vec3 mul(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2], m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

constexpr Mat3 inverse(const Mat3& m) {
  const double c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
  const double c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
  const double c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
  const double det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
  const double inv = 1.0 / det;
  return {{{c00 * inv, (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv, (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv},
           {c01 * inv, (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv, (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv},
           {c02 * inv, (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv, (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv}}};
}

inline double lab_f(double t) { return t > kLabEpsilon ? std::cbrt(t) : (kLabKappa * t + 16.0) / 116.0; }

inline double lab_f_inv(double f) {
  const double f3 = f * f * f;
  return f3 > kLabEpsilon ? f3 : (116.0 * f - 16.0) / kLabKappa;
}

}  // namespace detail

inline constexpr Mat3 kXyzToRgb = detail::inverse(kRgbToXyz);
/// Reference white is what the matrix maps (1, 1, 1) to, so sRGB white lands exactly on a = b = 0.
inline constexpr Vec3 kWhite = detail::mul(kRgbToXyz, Vec3{1.0, 1.0, 1.0});

inline double srgb_to_linear(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

inline double linear_to_srgb(double v) {
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

/// 8-bit sRGB triple -> (L, a, b), unclamped.
inline Vec3 srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const Vec3 lin{srgb_to_linear(r / 255.0), srgb_to_linear(g / 255.0), srgb_to_linear(b / 255.0)};
  const Vec3 xyz = detail::mul(kRgbToXyz, lin);
  const double fx = detail::lab_f(xyz[0] / kWhite[0]);
  const double fy = detail::lab_f(xyz[1] / kWhite[1]);
  const double fz = detail::lab_f(xyz[2] / kWhite[2]);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

/// (L, a, b) -> 8-bit sRGB, out-of-gamut values clamped.
inline std::array<std::uint8_t, 3> lab_to_srgb(double L, double a, double b) {
  const double fy = (L + 16.0) / 116.0;
  const double fx = fy + a / 500.0;
  const double fz = fy - b / 200.0;
  const double yr = L > kLabKappa * kLabEpsilon ? fy * fy * fy : L / kLabKappa;
  const Vec3 xyz{detail::lab_f_inv(fx) * kWhite[0], yr * kWhite[1], detail::lab_f_inv(fz) * kWhite[2]};
  const Vec3 lin = detail::mul(kXyzToRgb, xyz);
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const double v = linear_to_srgb(std::clamp(lin[c], 0.0, 1.0)) * 255.0;
    out[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return out;
}

/// Arithmetic-mean grayscale (R+G+B)/3 scaled to [0, 1]. Not luma.
inline GrayImage to_grayscale(const RgbImage& img) {
  GrayImage out(img.width, img.height);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const int sum = img.pixels[3 * i] + img.pixels[3 * i + 1] + img.pixels[3 * i + 2];
    out.pixels[i] = (sum / 3.0) / 255.0;
  }
  return out;
}

struct LabImage {
  int width = 0;
  int height = 0;
  std::vector<double> lightness;  ///< L in [0, 100]
  AbImage ab;                     ///< clamped to [-128, 127]
};

inline LabImage srgb_to_lab(const RgbImage& img) {
  LabImage out{img.width, img.height, std::vector<double>(static_cast<std::size_t>(img.width) * img.height),
               AbImage(img.width, img.height)};
  for (std::size_t i = 0; i < out.lightness.size(); ++i) {
    const Vec3 lab = srgb_to_lab(img.pixels[3 * i], img.pixels[3 * i + 1], img.pixels[3 * i + 2]);
    out.lightness[i] = std::clamp(lab[0], 0.0, 100.0);
    out.ab.pixels[2 * i] = std::clamp(lab[1], -128.0, 127.0);
    out.ab.pixels[2 * i + 1] = std::clamp(lab[2], -128.0, 127.0);
  }
  return out;
}

inline RgbImage lab_to_srgb(const std::vector<double>& lightness, const AbImage& ab) {
  if (lightness.size() != static_cast<std::size_t>(ab.width) * ab.height)
    throw Error(ErrorCode::ShapeMismatch, "L and ab planes differ in size");
  RgbImage out(ab.width, ab.height);
  for (std::size_t i = 0; i < lightness.size(); ++i) {
    const auto rgb = lab_to_srgb(lightness[i], ab.pixels[2 * i], ab.pixels[2 * i + 1]);
    out.pixels[3 * i] = rgb[0];
    out.pixels[3 * i + 1] = rgb[1];
    out.pixels[3 * i + 2] = rgb[2];
  }
  return out;
}

inline RgbImage lab_to_srgb(const LabImage& lab) { return lab_to_srgb(lab.lightness, lab.ab); }

}  // namespace pforge::color
