#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lapinet/image.hpp"
#include "lapinet/rng.hpp"
#include "lapinet/tensor.hpp"

namespace lapinet {

/// Generators are pure functions of (seed, count): repeated calls return
/// byte-identical datasets. Every random draw goes through one sequential
/// stream per call.

struct BurnGenConfig {
  int width = 320;
  int height = 240;
  int max_burns = 3;
};

struct KeypointGenConfig {
  /// Fraction of samples that keep only the two eye-center annotations.
  double missing_fraction = 0.25;
};

namespace detail {

struct Ellipse {
  double cx, cy, a, b, phi;

  bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    const double u = (dx * c + dy * s) / a;
    const double v = (-dx * s + dy * c) / b;
    return u * u + v * v <= 1.0;
  }
};

inline std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

}  // namespace detail

/// Each image holds cool background clutter, one warm elliptical skin region
/// whose colors pass the rule-1 thresholds, and up to max_burns elliptical
/// burn zones (label 1 = light: redder and warmer; label 2 = serious: darker
/// with pale patches). Ground-truth burn masks are filled in.
inline std::vector<MultimodalImage> gen_burn_dataset(std::uint64_t seed, Index count,
                                                     const BurnGenConfig& cfg = {}) {
  using detail::Ellipse;
  using detail::clamp_u8;
  std::vector<MultimodalImage> out;
  out.reserve(static_cast<std::size_t>(count));
  Rng rng(seed);
  const int W = cfg.width;
  const int H = cfg.height;
  const std::size_t plane = static_cast<std::size_t>(W) * static_cast<std::size_t>(H);

  for (Index index = 0; index < count; ++index) {
    MultimodalImage img;
    img.width = W;
    img.height = H;
    img.id = "burn_" + std::to_string(index);
    img.color.assign(3 * plane, 0);
    img.temperature.assign(plane, 0.0f);
    img.burn_mask.assign(plane, 0);

    // background: muted clutter, always cooler than the rule-2 threshold
    const double bg_r = rng.uniform(40, 110);
    const double bg_g = rng.uniform(50, 120);
    const double bg_b = rng.uniform(60, 140);
    const double bg_temp = rng.uniform(20.0, 26.0);
    std::vector<Ellipse> clutter;
    const int n_clutter = static_cast<int>(rng.uniform_int(4, 10));
    std::vector<std::array<double, 3>> clutter_color;
    for (int i = 0; i < n_clutter; ++i) {
      clutter.push_back({rng.uniform(0, W), rng.uniform(0, H), rng.uniform(10, 60),
                         rng.uniform(10, 60), rng.uniform(0, 3.14159265)});
      clutter_color.push_back({rng.uniform(30, 140), rng.uniform(30, 150), rng.uniform(30, 160)});
    }

    const Ellipse skin{rng.uniform(0.35 * W, 0.65 * W), rng.uniform(0.35 * H, 0.65 * H),
                       rng.uniform(70, 110), rng.uniform(55, 85),
                       rng.uniform(0, 3.14159265)};
    const double skin_r = rng.uniform(178, 202);
    const double skin_g = rng.uniform(104, 128);
    const double skin_b = rng.uniform(86, 110);
    const double skin_temp = rng.uniform(33.6, 35.2);

    struct Burn {
      Ellipse e;
      int label;
      double r, g, b, temp, phase_x, phase_y;
    };
    std::vector<Burn> burns;
    const int n_burns = static_cast<int>(rng.uniform_int(0, cfg.max_burns));
    for (int i = 0; i < n_burns; ++i) {
      Ellipse e{0, 0, rng.uniform(14, 34), rng.uniform(12, 28), rng.uniform(0, 3.14159265)};
      // center inside the skin region so burns sit on skin
      do {
        e.cx = rng.uniform(skin.cx - skin.a, skin.cx + skin.a);
        e.cy = rng.uniform(skin.cy - skin.b, skin.cy + skin.b);
      } while (!skin.contains(e.cx, e.cy));
      Burn burn;
      burn.e = e;
      burn.label = rng.bernoulli(0.5) ? 1 : 2;
      if (burn.label == 1) {
        burn.r = rng.uniform(218, 242);
        burn.g = rng.uniform(72, 98);
        burn.b = rng.uniform(56, 84);
        burn.temp = rng.uniform(36.2, 38.4);
      } else {
        burn.r = rng.uniform(102, 132);
        burn.g = rng.uniform(46, 68);
        burn.b = rng.uniform(40, 60);
        burn.temp = rng.uniform(33.6, 36.8);
      }
      burn.phase_x = rng.uniform(0, 6.283185307);
      burn.phase_y = rng.uniform(0, 6.283185307);
      burns.push_back(burn);
    }

    std::size_t p = 0;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x, ++p) {
        double r = bg_r, g = bg_g, b = bg_b;
        double t = bg_temp + 2.0 * std::sin(x * 0.021) * std::cos(y * 0.017);
        for (std::size_t ci = 0; ci < clutter.size(); ++ci)
          if (clutter[ci].contains(x, y)) {
            r = clutter_color[ci][0];
            g = clutter_color[ci][1];
            b = clutter_color[ci][2];
          }
        int label = 0;
        if (skin.contains(x, y)) {
          r = skin_r;
          g = skin_g;
          b = skin_b;
          t = skin_temp + 0.6 * std::sin(x * 0.04 + y * 0.03);
          for (const auto& burn : burns)
            if (burn.e.contains(x, y)) {
              label = burn.label;
              r = burn.r;
              g = burn.g;
              b = burn.b;
              t = burn.temp;
              if (burn.label == 2) {
                // pale scarring patches inside serious burns
                const double field = std::sin(x * 0.29 + burn.phase_x) * std::sin(y * 0.31 + burn.phase_y);
                if (field > 0.25) {
                  const double mix = 0.7;
                  r = r + mix * (212.0 - r);
                  g = g + mix * (202.0 - g);
                  b = b + mix * (192.0 - b);
                }
              }
            }
        }
        // per-pixel noise; skin stays inside the rule-passing color box
        const double nr = rng.uniform(-7, 7);
        const double ng = rng.uniform(-7, 7);
        const double nb = rng.uniform(-7, 7);
        const double nt = rng.uniform(-0.3, 0.3);
        if (label == 0 && skin.contains(x, y)) {
          r = std::clamp(r + nr, 172.0, 208.0);
          g = std::clamp(g + ng, 100.0, 132.0);
          b = std::clamp(b + nb, 82.0, 114.0);
          t = std::clamp(t + nt, 33.0, 35.8);
        } else {
          r += nr;
          g += ng;
          b += nb;
          t += nt;
          if (label == 0) t = std::min(t, 31.0);        // background stays cold
          else t = std::clamp(t, 33.0, 39.0);           // burns stay warm
        }
        img.color[p] = clamp_u8(r);
        img.color[plane + p] = clamp_u8(g);
        img.color[2 * plane + p] = clamp_u8(b);
        img.temperature[p] = static_cast<float>(t);
        img.burn_mask[p] = static_cast<std::uint8_t>(label);
      }
    out.push_back(std::move(img));
  }
  return out;
}

/// Canonical face geometry in a local frame (x right, y down, origin at the
/// face center). "left" features sit at positive x: the subject's left is the
/// image's right side. Keypoints are the same points the renderer draws, so
/// eye-center annotations coincide with the drawn eye blobs exactly.
namespace detail {

inline constexpr std::array<std::array<double, 2>, kKeypointCount> kCanonicalFace = {{
    {13.0, -9.0},    // left_eye_center
    {-13.0, -9.0},   // right_eye_center
    {7.5, -9.0},     // left_eye_inner_corner
    {18.5, -9.0},    // left_eye_outer_corner
    {-7.5, -9.0},    // right_eye_inner_corner
    {-18.5, -9.0},   // right_eye_outer_corner
    {6.0, -15.0},    // left_eyebrow_inner_end
    {19.0, -15.0},   // left_eyebrow_outer_end
    {-6.0, -15.0},   // right_eyebrow_inner_end
    {-19.0, -15.0},  // right_eyebrow_outer_end
    {0.0, 2.5},      // nose_tip
    {11.0, 13.0},    // mouth_left_corner
    {-11.0, 13.0},   // mouth_right_corner
    {0.0, 10.5},     // mouth_center_top_lip
    {0.0, 16.5},     // mouth_center_bottom_lip
}};

inline double dist_to_segment(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax;
  const double vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx);
  const double dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace detail

/// Renders schematic faces (eye strips with dark pupils, brows, nose, mouth
/// bar) at a randomized position/scale/rotation/contrast; the 15 keypoints
/// come from the same affine transform the renderer uses. A configurable
/// fraction of samples keeps only the eye-center annotations.
inline std::vector<KeypointSample> gen_keypoint_dataset(std::uint64_t seed, Index count,
                                                        const KeypointGenConfig& cfg = {}) {
  std::vector<KeypointSample> out;
  out.reserve(static_cast<std::size_t>(count));
  Rng rng(seed);
  constexpr int S = 96;

  for (Index index = 0; index < count; ++index) {
    KeypointSample sample;
    sample.id = "face_" + std::to_string(index);
    sample.image.assign(S * S, 0);

    const double cx = 48.0 + rng.uniform(-7.0, 7.0);
    const double cy = 48.0 + rng.uniform(-6.0, 6.0);
    const double scale = rng.uniform(0.75, 1.1);
    const double theta = rng.uniform(-0.18, 0.18);
    const double bg = rng.uniform(150, 205);
    const double face_tone = bg + (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(12, 30);
    const double ink = rng.uniform(35, 75);
    const double contrast = rng.uniform(0.85, 1.15);
    const bool drop_non_eye = rng.bernoulli(cfg.missing_fraction);

    const double c = std::cos(theta);
    const double s = std::sin(theta);
    // coordinates quantized to 1/256 px: reflection (95 - x) is then exact in
    // float, which makes horizontal flips a bitwise involution
    const auto quantize = [](double v) {
      return static_cast<float>(std::round(v * 256.0) / 256.0);
    };
    for (int k = 0; k < kKeypointCount; ++k) {
      const auto [fx, fy] = detail::kCanonicalFace[static_cast<std::size_t>(k)];
      sample.points[static_cast<std::size_t>(2 * k)] = quantize(cx + scale * (c * fx - s * fy));
      sample.points[static_cast<std::size_t>(2 * k + 1)] = quantize(cy + scale * (s * fx + c * fy));
      sample.present[static_cast<std::size_t>(k)] = !drop_non_eye || k == 0 || k == 1;
    }

    const auto& F = detail::kCanonicalFace;
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        // face-local coordinates (inverse of the keypoint transform)
        const double dx = (x - cx) / scale;
        const double dy = (y - cy) / scale;
        const double fx = c * dx + s * dy;
        const double fy = -s * dx + c * dy;

        double v = bg;
        if ((fx / 24.0) * (fx / 24.0) + (fy / 31.0) * (fy / 31.0) <= 1.0) v = face_tone;

        const auto eye_strip = [&](int inner, int outer) {
          return detail::dist_to_segment(fx, fy, F[static_cast<std::size_t>(inner)][0],
                                         F[static_cast<std::size_t>(inner)][1],
                                         F[static_cast<std::size_t>(outer)][0],
                                         F[static_cast<std::size_t>(outer)][1]);
        };
        if (eye_strip(2, 3) < 2.6 || eye_strip(4, 5) < 2.6) v = ink + 25;
        const double del = std::hypot(fx - F[0][0], fy - F[0][1]);
        const double der = std::hypot(fx - F[1][0], fy - F[1][1]);
        if (del < 3.2 || der < 3.2) v = ink;
        if (eye_strip(6, 7) < 1.4 || eye_strip(8, 9) < 1.4) v = ink + 15;
        if (std::hypot(fx - F[10][0], fy - F[10][1]) < 2.0) v = ink + 40;
        // mouth: asymmetric bar, thinner above the corner line than below
        const double mouth_d = detail::dist_to_segment(fx, fy, F[11][0], F[11][1], F[12][0], F[12][1]);
        const double rel_y = fy - F[11][1];
        if (mouth_d < 3.5 && rel_y >= -2.5 && (std::abs(fx) <= 11.0 ? true : mouth_d < 2.5)) v = ink + 10;

        v += rng.uniform(-5.0, 5.0);
        v = 128.0 + contrast * (v - 128.0);
        sample.image[static_cast<std::size_t>(y * S + x)] = detail::clamp_u8(v);
      }
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace lapinet
