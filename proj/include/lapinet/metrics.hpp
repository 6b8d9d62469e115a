#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lapinet/image.hpp"
#include "lapinet/network.hpp"
#include "lapinet/patches.hpp"
#include "lapinet/tensor.hpp"

namespace lapinet {

/// K x K counts; rows are ground truth, columns predictions.
struct ConfusionMatrix {
  Index k = 0;
  std::vector<std::int64_t> counts;

  explicit ConfusionMatrix(Index classes) : k(classes), counts(static_cast<std::size_t>(classes * classes), 0) {}

  void add(int truth, int pred) {
    if (truth < 0 || truth >= k || pred < 0 || pred >= k)
      throw DataError("confusion matrix: class index out of range");
    ++counts[static_cast<std::size_t>(truth * k + pred)];
  }
  std::int64_t at(Index truth, Index pred) const {
    return counts[static_cast<std::size_t>(truth * k + pred)];
  }
  std::int64_t total() const {
    std::int64_t t = 0;
    for (const auto c : counts) t += c;
    return t;
  }
  std::int64_t diagonal() const {
    std::int64_t t = 0;
    for (Index i = 0; i < k; ++i) t += at(i, i);
    return t;
  }
};

inline double accuracy(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total == 0) throw DataError("accuracy: empty confusion matrix");
  return static_cast<double>(cm.diagonal()) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Keypoint evaluation

enum class KeypointAggregate { mean, max };

/// Per-image prediction error normalized by the true inter-ocular distance.
/// The two eye centers define the normalizer and must be present; the scored
/// set is every other present keypoint, aggregated by mean (default) or max.
/// `pred` holds 30 pixel coordinates (x0, y0, ..., x14, y14).
inline double interocular_error(std::span<const float> pred, const KeypointSample& truth,
                                KeypointAggregate aggregate = KeypointAggregate::mean) {
  if (pred.size() != 2 * kKeypointCount)
    throw DataError("interocular_error: expected 30 predicted coordinates");
  if (!truth.present[0] || !truth.present[1])
    throw DataError("interocular_error: both eye centers must be present in the truth");
  const double iod = std::hypot(static_cast<double>(truth.x(0)) - truth.x(1),
                                static_cast<double>(truth.y(0)) - truth.y(1));
  if (iod <= 0.0) throw DataError("interocular_error: zero inter-ocular distance");
  double sum = 0.0;
  double worst = 0.0;
  int scored = 0;
  for (int k = 2; k < kKeypointCount; ++k) {
    if (!truth.present[static_cast<std::size_t>(k)]) continue;
    const double d = std::hypot(static_cast<double>(pred[static_cast<std::size_t>(2 * k)]) - truth.x(k),
                                static_cast<double>(pred[static_cast<std::size_t>(2 * k + 1)]) - truth.y(k));
    sum += d;
    worst = std::max(worst, d);
    ++scored;
  }
  if (scored == 0) throw DataError("interocular_error: no keypoint beyond the eye centers present");
  const double err = aggregate == KeypointAggregate::mean ? sum / scored : worst;
  return err / iod;
}

/// Fraction of images whose error is strictly below the threshold.
inline double hit_rate(const std::vector<double>& errors, double threshold = 0.1) {
  if (errors.empty()) throw DataError("hit_rate: no errors given");
  std::int64_t hits = 0;
  for (const double e : errors) hits += (e < threshold);
  return static_cast<double>(hits) / static_cast<double>(errors.size());
}

struct KeypointEvalResult {
  std::vector<double> per_image_error;
  std::vector<bool> hit;
  double hit_rate = 0.0;
};

/// Runs the regressor over the samples and scores it at the given threshold.
/// Network outputs are in [-1, 1] and are mapped back to pixels first.
/// Samples with no scorable keypoint (only the eye centers annotated) are
/// skipped rather than counted either way.
inline KeypointEvalResult evaluate_keypoints(Network<float>& net,
                                             const std::vector<KeypointSample>& samples,
                                             double threshold = 0.1,
                                             KeypointAggregate aggregate = KeypointAggregate::mean) {
  if (samples.empty()) throw DataError("evaluate_keypoints: no samples");
  KeypointEvalResult result;
  const LayerMode saved = net.mode();
  net.set_mode(LayerMode::inference);
  constexpr Index kBatch = 64;
  const int S = samples.front().width;
  for (std::size_t pos = 0; pos < samples.size(); pos += kBatch) {
    const Index n = std::min<Index>(kBatch, static_cast<Index>(samples.size() - pos));
    Tensor<float> batch({n, 1, S, S});
    for (Index i = 0; i < n; ++i)
      for (int p = 0; p < S * S; ++p)
        batch.data[i * S * S + p] =
            static_cast<float>(samples[pos + static_cast<std::size_t>(i)].image[static_cast<std::size_t>(p)]) / 255.0f;
    const Tensor<float> out = net.forward(batch);
    for (Index i = 0; i < n; ++i) {
      const KeypointSample& truth = samples[pos + static_cast<std::size_t>(i)];
      int scorable = 0;
      for (int k = 2; k < kKeypointCount; ++k) scorable += truth.present[static_cast<std::size_t>(k)];
      if (scorable == 0) continue;
      std::array<float, 2 * kKeypointCount> pred{};
      for (int k = 0; k < 2 * kKeypointCount; ++k)
        pred[static_cast<std::size_t>(k)] =
            keypoint_to_pixels(out.data[i * 2 * kKeypointCount + k]);
      result.per_image_error.push_back(interocular_error(pred, truth, aggregate));
    }
  }
  net.set_mode(saved);
  for (const double e : result.per_image_error) result.hit.push_back(e < threshold);
  result.hit_rate = hit_rate(result.per_image_error, threshold);
  return result;
}

// ---------------------------------------------------------------------------
// Patch-grid segmentation

/// Block classification of an image: a patch grid at the given stride, one
/// class label per block, plus a color overlay. Border pixels not covered by
/// any patch are labeled unknown and tinted gray.
struct SegmentResult {
  Index grid_w = 0;
  Index grid_h = 0;
  std::vector<int> block_labels;      // row-major (grid_h, grid_w)
  Index covered_w = 0;
  Index covered_h = 0;
  std::vector<std::uint8_t> overlay;  // (3, H, W)
};

inline constexpr int kSegmentUnknown = 255;

namespace detail {

/// Overlay palette: skin blue, serious burn red, light burn orange (2-class
/// nets use full red for the single burn class), unknown gray; alpha 0.5.
inline std::array<std::uint8_t, 3> segment_color(int label, Index num_classes) {
  if (label == kSegmentUnknown) return {128, 128, 128};
  if (label == 0) return {0, 0, 255};
  if (num_classes == 2) return {255, 0, 0};
  return label == 1 ? std::array<std::uint8_t, 3>{255, 128, 0}
                    : std::array<std::uint8_t, 3>{255, 0, 0};
}

}  // namespace detail

inline SegmentResult segment_image(const MultimodalImage& img, Network<float>& net, int patch_size,
                                   int stride) {
  if (stride <= 0) throw ConfigError("segment_image: stride must be positive");
  const Shape4 in = net.spec().input;
  if (in.h != patch_size || in.w != patch_size)
    throw ConfigError("segment_image: net expects " + std::to_string(in.h) + "x" +
                      std::to_string(in.w) + " patches, got patch_size " +
                      std::to_string(patch_size));
  if (in.c != 3 && in.c != 4)
    throw ConfigError("segment_image: net input must have 3 or 4 channels");
  if (patch_size > img.width || patch_size > img.height)
    throw GeometryError("segment_image: patch does not fit in the image");

  PatchConfig pcfg;
  pcfg.size = patch_size;
  pcfg.include_infrared = (in.c == 4);

  SegmentResult res;
  res.grid_w = (img.width - patch_size) / stride + 1;
  res.grid_h = (img.height - patch_size) / stride + 1;
  res.covered_w = (res.grid_w - 1) * stride + patch_size;
  res.covered_h = (res.grid_h - 1) * stride + patch_size;
  res.block_labels.assign(static_cast<std::size_t>(res.grid_w * res.grid_h), kSegmentUnknown);

  const LayerMode saved = net.mode();
  net.set_mode(LayerMode::inference);
  const Index blocks = res.grid_w * res.grid_h;
  constexpr Index kBatch = 128;
  const Index k = net.spec().output_dim;
  for (Index pos = 0; pos < blocks; pos += kBatch) {
    const Index n = std::min<Index>(kBatch, blocks - pos);
    Tensor<float> batch({n, in.c, patch_size, patch_size});
    for (Index i = 0; i < n; ++i) {
      const Index b = pos + i;
      const Index gx = b % res.grid_w;
      const Index gy = b / res.grid_w;
      write_patch(img, gx * stride + patch_size / 2, gy * stride + patch_size / 2, pcfg, batch, i);
    }
    const Tensor<float> probs = net.forward(batch);
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      for (Index j = 1; j < k; ++j)
        if (probs.data[i * k + j] > probs.data[i * k + best]) best = j;
      res.block_labels[static_cast<std::size_t>(pos + i)] = static_cast<int>(best);
    }
  }
  net.set_mode(saved);

  // per-pixel label map first (later blocks own the overlap), then one
  // alpha-0.5 tint per pixel
  const std::size_t plane = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  std::vector<int> pixel_label(plane, kSegmentUnknown);
  for (Index gy = 0; gy < res.grid_h; ++gy)
    for (Index gx = 0; gx < res.grid_w; ++gx) {
      const int label = res.block_labels[static_cast<std::size_t>(gy * res.grid_w + gx)];
      for (Index y = gy * stride; y < gy * stride + patch_size; ++y)
        for (Index x = gx * stride; x < gx * stride + patch_size; ++x)
          pixel_label[static_cast<std::size_t>(y * img.width + x)] = label;
    }
  res.overlay = img.color;
  for (std::size_t p = 0; p < plane; ++p) {
    const auto c = detail::segment_color(pixel_label[p], k);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const std::size_t idx = ch * plane + p;
      res.overlay[idx] = static_cast<std::uint8_t>((res.overlay[idx] + c[ch]) / 2);
    }
  }
  return res;
}

}  // namespace lapinet
