#pragma once

#include <array>
#include <numeric>
#include <string>
#include <vector>

#include "lapinet/image.hpp"
#include "lapinet/rng.hpp"
#include "lapinet/synth.hpp"
#include "lapinet/tensor.hpp"
#include "lapinet/train.hpp"

namespace lapinet {

/// Fixed-size training crops with class labels and their source coordinates.
struct PatchSet {
  Tensor<float> patches;                       // (N, C, S, S); empty set: N stays 0 in counts below
  Index count = 0;
  std::vector<int> labels;
  std::vector<std::array<Index, 2>> centers;   // (x, y) of each patch center
  std::vector<Index> shortfall;                // per class: quota minus delivered
};

struct PatchConfig {
  int size = 32;            // 32 or 64
  Index per_class_quota = 0;
  bool include_infrared = false;  // adds a 4th channel (t - 20) / 20
};

/// Channel count of a patch tensor.
inline Index patch_channels(const PatchConfig& cfg) { return cfg.include_infrared ? 4 : 3; }

/// Writes the patch centered at (cx, cy) into row `row` of `dst`.
/// RGB scales to [0, 1]; the infrared channel uses (t - 20) / 20.
inline void write_patch(const MultimodalImage& img, Index cx, Index cy, const PatchConfig& cfg,
                        Tensor<float>& dst, Index row) {
  const int S = cfg.size;
  const Index x0 = cx - S / 2;
  const Index y0 = cy - S / 2;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x)
        dst(row, c, y, x) =
            static_cast<float>(img.at(c, static_cast<int>(y0) + y, static_cast<int>(x0) + x)) / 255.0f;
  if (cfg.include_infrared)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x)
        dst(row, 3, y, x) =
            (img.temp(static_cast<int>(y0) + y, static_cast<int>(x0) + x) - 20.0f) / 20.0f;
}

/// Samples up to per_class_quota patch centers per class, without
/// replacement, from the pixels where that class's region mask is set and the
/// patch fits inside the image. Classes with fewer eligible centers deliver
/// fewer patches; the deficit is recorded in `shortfall`.
inline PatchSet extract_patches(const MultimodalImage& img,
                                const std::vector<std::vector<std::uint8_t>>& class_masks,
                                const PatchConfig& cfg, Rng& rng) {
  if (cfg.size > img.width || cfg.size > img.height)
    throw GeometryError("extract_patches: patch size " + std::to_string(cfg.size) +
                        " exceeds image " + std::to_string(img.width) + "x" +
                        std::to_string(img.height));
  if (cfg.per_class_quota < 0) throw ConfigError("extract_patches: quota must be >= 0");
  const Index half = cfg.size / 2;
  const Index x_lo = half, x_hi = img.width - half;   // center range [x_lo, x_hi]
  const Index y_lo = half, y_hi = img.height - half;

  PatchSet set;
  set.shortfall.assign(class_masks.size(), 0);
  std::vector<std::array<Index, 2>> chosen;  // (center, class) accumulated
  std::vector<int> chosen_label;

  for (std::size_t cls = 0; cls < class_masks.size(); ++cls) {
    const auto& mask = class_masks[cls];
    std::vector<Index> eligible;
    for (Index y = y_lo; y <= y_hi; ++y)
      for (Index x = x_lo; x <= x_hi; ++x)
        if (mask[static_cast<std::size_t>(y * img.width + x)]) eligible.push_back(y * img.width + x);
    // partial Fisher-Yates: the first `take` entries are a uniform sample
    const Index take = std::min<Index>(cfg.per_class_quota, static_cast<Index>(eligible.size()));
    for (Index i = 0; i < take; ++i) {
      const Index j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(eligible.size() - i)));
      std::swap(eligible[static_cast<std::size_t>(i)], eligible[static_cast<std::size_t>(j)]);
      const Index flat = eligible[static_cast<std::size_t>(i)];
      chosen.push_back({flat % img.width, flat / img.width});
      chosen_label.push_back(static_cast<int>(cls));
    }
    set.shortfall[cls] = cfg.per_class_quota - take;
  }

  set.count = static_cast<Index>(chosen.size());
  if (set.count == 0) return set;
  set.patches = Tensor<float>({set.count, patch_channels(cfg), cfg.size, cfg.size});
  for (Index i = 0; i < set.count; ++i) {
    const auto [cx, cy] = chosen[static_cast<std::size_t>(i)];
    write_patch(img, cx, cy, cfg, set.patches, i);
    set.centers.push_back({cx, cy});
    set.labels.push_back(chosen_label[static_cast<std::size_t>(i)]);
  }
  return set;
}

/// Class region masks for the burn problem: class 0 is rule-identified skin,
/// the burn classes come from the ground-truth mask (2 classes: any burn;
/// 3 classes: light and serious separately).
inline std::vector<std::vector<std::uint8_t>> burn_class_masks(const MultimodalImage& img,
                                                               int num_classes,
                                                               const SkinRuleConfig& rules = {}) {
  if (num_classes != 2 && num_classes != 3)
    throw ConfigError("burn_class_masks: num_classes must be 2 or 3");
  const std::size_t plane = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  std::vector<std::vector<std::uint8_t>> masks(static_cast<std::size_t>(num_classes),
                                               std::vector<std::uint8_t>(plane, 0));
  masks[0] = skin_mask(img, rules);
  for (std::size_t p = 0; p < plane; ++p) {
    const std::uint8_t b = img.burn_mask.empty() ? 0 : img.burn_mask[p];
    if (b == 0) continue;
    if (num_classes == 2)
      masks[1][p] = 1;
    else
      masks[static_cast<std::size_t>(b)][p] = 1;
  }
  return masks;
}

/// Assembles a labeled patch dataset across images: a fair per-image quota is
/// drawn, then each class is truncated to exactly total_per_class (images
/// with scarce classes simply contribute less). When `image_splits` is given
/// (one 0 = train / 1 = val tag per image), every patch inherits its source
/// image's tag; otherwise the dataset carries no split and train() derives
/// its own.
inline Dataset<float> make_burn_patch_dataset(const std::vector<MultimodalImage>& images,
                                              int num_classes, Index total_per_class,
                                              const PatchConfig& base_cfg, std::uint64_t seed,
                                              const SkinRuleConfig& rules = {},
                                              const std::vector<int>& image_splits = {}) {
  if (images.empty()) throw DataError("make_burn_patch_dataset: no images");
  if (!image_splits.empty() && image_splits.size() != images.size())
    throw DataError("make_burn_patch_dataset: one split tag per image required");
  Rng rng(seed);
  PatchConfig cfg = base_cfg;
  cfg.per_class_quota =
      (total_per_class + static_cast<Index>(images.size()) - 1) / static_cast<Index>(images.size());

  const Index channels = patch_channels(cfg);
  std::vector<Tensor<float>> parts;
  std::vector<int> labels;
  std::vector<int> patch_split;
  std::vector<std::vector<Index>> rows_by_class(static_cast<std::size_t>(num_classes));
  Index row_base = 0;
  for (std::size_t ii = 0; ii < images.size(); ++ii) {
    PatchSet set = extract_patches(images[ii], burn_class_masks(images[ii], num_classes, rules),
                                   cfg, rng);
    if (set.count == 0) continue;
    parts.push_back(std::move(set.patches));
    for (Index i = 0; i < set.count; ++i) {
      labels.push_back(set.labels[static_cast<std::size_t>(i)]);
      if (!image_splits.empty()) patch_split.push_back(image_splits[ii]);
      rows_by_class[static_cast<std::size_t>(set.labels[static_cast<std::size_t>(i)])].push_back(
          row_base + i);
    }
    row_base += set.count;
  }
  // truncate each class to the requested total
  std::vector<char> keep(static_cast<std::size_t>(row_base), 0);
  for (auto& rows : rows_by_class)
    for (std::size_t i = 0; i < rows.size() && i < static_cast<std::size_t>(total_per_class); ++i)
      keep[static_cast<std::size_t>(rows[i])] = 1;

  Index kept = 0;
  for (const char k : keep) kept += k;
  if (kept == 0) throw DataError("make_burn_patch_dataset: no eligible patches");

  Dataset<float> ds;
  ds.inputs = Tensor<float>({kept, channels, cfg.size, cfg.size});
  ds.labels.reserve(static_cast<std::size_t>(kept));
  const Index stride = channels * cfg.size * cfg.size;
  Index src_row = 0;
  Index dst_row = 0;
  for (const auto& part : parts) {
    const Index rows = part.shape.n;
    for (Index r = 0; r < rows; ++r, ++src_row) {
      if (!keep[static_cast<std::size_t>(src_row)]) continue;
      ds.inputs.data.segment(dst_row * stride, stride) = part.data.segment(r * stride, stride);
      ds.labels.push_back(labels[static_cast<std::size_t>(src_row)]);
      if (!image_splits.empty()) ds.split.push_back(patch_split[static_cast<std::size_t>(src_row)]);
      ++dst_row;
    }
  }
  return ds;
}

/// Keypoint coordinates map to [-1, 1] over the 96-pixel frame:
/// normalized = 2 * pixel / 95 - 1.
inline float keypoint_to_normalized(float pixel) { return 2.0f * pixel / 95.0f - 1.0f; }
inline float keypoint_to_pixels(float normalized) { return (normalized + 1.0f) * 47.5f; }

/// Regression dataset from keypoint samples; optionally appends a flipped
/// copy of every sample (the augmented set is twice the input size). Split
/// tags, when given, carry over to the flipped copies.
inline Dataset<float> make_keypoint_dataset(const std::vector<KeypointSample>& samples,
                                            bool augment_flip,
                                            const std::vector<int>& splits = {}) {
  if (samples.empty()) throw DataError("make_keypoint_dataset: no samples");
  if (!splits.empty() && splits.size() != samples.size())
    throw DataError("make_keypoint_dataset: one split tag per sample required");
  std::vector<const KeypointSample*> view;
  std::vector<KeypointSample> flipped;
  std::vector<int> view_split;
  view.reserve(samples.size() * (augment_flip ? 2 : 1));
  if (augment_flip) flipped.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    view.push_back(&samples[i]);
    if (!splits.empty()) view_split.push_back(splits[i]);
  }
  if (augment_flip)
    for (std::size_t i = 0; i < samples.size(); ++i) {
      flipped.push_back(flip_keypoint_sample(samples[i]));
      view.push_back(&flipped.back());
      if (!splits.empty()) view_split.push_back(splits[i]);
    }

  const Index n = static_cast<Index>(view.size());
  const int S = samples.front().width;
  Dataset<float> ds;
  ds.inputs = Tensor<float>({n, 1, S, S});
  ds.targets = Tensor<float>({n, 2 * kKeypointCount, 1, 1});
  ds.target_mask.assign(static_cast<std::size_t>(n * 2 * kKeypointCount), 0);
  for (Index i = 0; i < n; ++i) {
    const KeypointSample& s = *view[static_cast<std::size_t>(i)];
    for (int p = 0; p < S * S; ++p)
      ds.inputs.data[i * S * S + p] = static_cast<float>(s.image[static_cast<std::size_t>(p)]) / 255.0f;
    for (int k = 0; k < 2 * kKeypointCount; ++k) {
      ds.targets.data[i * 2 * kKeypointCount + k] =
          keypoint_to_normalized(s.points[static_cast<std::size_t>(k)]);
      ds.target_mask[static_cast<std::size_t>(i * 2 * kKeypointCount + k)] =
          s.present[static_cast<std::size_t>(k / 2)];
    }
  }
  if (!view_split.empty()) ds.split = std::move(view_split);
  return ds;
}

}  // namespace lapinet
