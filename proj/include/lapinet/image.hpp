#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lapinet/error.hpp"

namespace lapinet {

/// Registered color + infrared pair, optionally with burn-zone labels.
/// Planes are row-major; `color` holds the R, G and B planes back to back.
struct MultimodalImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> color;     // (3, H, W), values 0..255
  std::vector<float> temperature;      // (H, W), degrees Celsius
  std::vector<std::uint8_t> burn_mask; // (H, W), labels {0 none, 1 light, 2 serious}; empty = none
  std::string id;

  std::uint8_t at(int channel, int y, int x) const {
    return color[static_cast<std::size_t>((channel * height + y) * width + x)];
  }
  float temp(int y, int x) const {
    return temperature[static_cast<std::size_t>(y * width + x)];
  }
  std::uint8_t burn(int y, int x) const {
    return burn_mask.empty() ? 0 : burn_mask[static_cast<std::size_t>(y * width + x)];
  }
};

inline constexpr int kKeypointCount = 15;

/// Keypoint index names, KFKD-style. "left" is the subject's left, which sits
/// on the image's right-hand side.
inline constexpr std::array<const char*, kKeypointCount> kKeypointNames = {
    "left_eye_center",        "right_eye_center",        "left_eye_inner_corner",
    "left_eye_outer_corner",  "right_eye_inner_corner",  "right_eye_outer_corner",
    "left_eyebrow_inner_end", "left_eyebrow_outer_end",  "right_eyebrow_inner_end",
    "right_eyebrow_outer_end","nose_tip",                "mouth_left_corner",
    "mouth_right_corner",     "mouth_center_top_lip",    "mouth_center_bottom_lip",
};

/// Left/right index pairs swapped by a horizontal flip. nose_tip and the two
/// mouth-center points map to themselves.
inline constexpr std::array<std::array<int, 2>, 6> kKeypointFlipPairs = {{
    {0, 1}, {2, 4}, {3, 5}, {6, 8}, {7, 9}, {11, 12},
}};

/// 96x96 gray image with up to 15 annotated (x, y) keypoints in pixel
/// coordinates; absent keypoints carry presence = false.
struct KeypointSample {
  int width = 96;
  int height = 96;
  std::vector<std::uint8_t> image;               // (1, H, W)
  std::array<float, 2 * kKeypointCount> points{};  // x0, y0, x1, y1, ...
  std::array<bool, kKeypointCount> present{};
  std::string id;

  float x(int k) const { return points[static_cast<std::size_t>(2 * k)]; }
  float y(int k) const { return points[static_cast<std::size_t>(2 * k + 1)]; }
};

/// Horizontal mirror: pixels and x coordinates reflect about the vertical
/// axis, left/right keypoint indices swap (an involution, bit for bit).
inline KeypointSample flip_keypoint_sample(const KeypointSample& s) {
  KeypointSample out = s;
  for (int yy = 0; yy < s.height; ++yy)
    for (int xx = 0; xx < s.width; ++xx)
      out.image[static_cast<std::size_t>(yy * s.width + xx)] =
          s.image[static_cast<std::size_t>(yy * s.width + (s.width - 1 - xx))];
  const float w1 = static_cast<float>(s.width - 1);
  for (int k = 0; k < kKeypointCount; ++k)
    out.points[static_cast<std::size_t>(2 * k)] = w1 - s.x(k);
  for (const auto& [a, b] : kKeypointFlipPairs) {
    std::swap(out.points[static_cast<std::size_t>(2 * a)], out.points[static_cast<std::size_t>(2 * b)]);
    std::swap(out.points[static_cast<std::size_t>(2 * a + 1)],
              out.points[static_cast<std::size_t>(2 * b + 1)]);
    std::swap(out.present[static_cast<std::size_t>(a)], out.present[static_cast<std::size_t>(b)]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Skin identification rules

struct Yuv {
  float y = 0;
  float u = 0;
  float v = 0;
};

/// BT.601 analog full-range conversion:
/// Y = 0.299 R + 0.587 G + 0.114 B, U = 0.492 (B - Y), V = 0.877 (R - Y).
inline Yuv rgb_to_yuv(float r, float g, float b) {
  const float y = 0.299f * r + 0.587f * g + 0.114f * b;
  return {y, 0.492f * (b - y), 0.877f * (r - y)};
}

/// Thresholds of the composite RGB-YUV test (rule 1) and the infrared floor
/// (rule 2). The color bounds are local defaults chosen for generic skin
/// chroma; they are configuration, not published values.
struct SkinRuleConfig {
  float min_red = 95.0f;
  float min_red_spread = 15.0f;  // R - min(G, B)
  float v_min = 10.0f;
  float v_max = 110.0f;
  float u_min = -60.0f;
  float u_max = 10.0f;
  float min_temperature_c = 32.0f;
};

/// Rule 1: the composite RGB-YUV threshold on one pixel.
inline bool skin_color_rule(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8,
                            const SkinRuleConfig& cfg) {
  const float r = r8, g = g8, b = b8;
  if (!(r > cfg.min_red && r > g && r > b && (r - std::min(g, b)) > cfg.min_red_spread))
    return false;
  const Yuv yuv = rgb_to_yuv(r, g, b);
  return yuv.v >= cfg.v_min && yuv.v <= cfg.v_max && yuv.u >= cfg.u_min && yuv.u <= cfg.u_max;
}

/// Normal-skin mask: the exact conjunction
///   rule 1 (color)  AND  temperature > threshold  AND  not in a burn zone.
/// No morphology or smoothing is applied.
inline std::vector<std::uint8_t> skin_mask(const MultimodalImage& img, const SkinRuleConfig& cfg = {}) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(img.width) *
                                 static_cast<std::size_t>(img.height));
  std::size_t i = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x, ++i) {
      mask[i] = skin_color_rule(img.at(0, y, x), img.at(1, y, x), img.at(2, y, x), cfg) &&
                img.temp(y, x) > cfg.min_temperature_c && img.burn(y, x) == 0;
    }
  return mask;
}

}  // namespace lapinet
