#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lapinet/image.hpp"

namespace lapinet {

/// Writes bytes via a temp file and an atomic rename, so failures never leave
/// partial artifacts at the destination.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Image formats: binary PPM (P6) for color, binary PGM (P5) for gray, both
// maxval 255. Round-trips are lossless.

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> planes;  // (3, H, W) planar, like MultimodalImage::color
};

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // (H, W)
};

void save_ppm(const std::filesystem::path& path, int width, int height,
              const std::vector<std::uint8_t>& planes);
RgbImage load_ppm(const std::filesystem::path& path);

void save_pgm(const std::filesystem::path& path, int width, int height,
              const std::vector<std::uint8_t>& pixels);
GrayImage load_pgm(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Temperature maps: magic "IRF1", u32 width, u32 height, then width*height
// little-endian float32 degrees Celsius, row-major.

void save_irf(const std::filesystem::path& path, int width, int height,
              const std::vector<float>& celsius);

struct TemperatureMap {
  int width = 0;
  int height = 0;
  std::vector<float> celsius;
};
TemperatureMap load_irf(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Label masks ride in PGM files with {0, 1, 2} stored as {0, 128, 255}.

void save_mask_pgm(const std::filesystem::path& path, int width, int height,
                   const std::vector<std::uint8_t>& labels);
std::vector<std::uint8_t> load_mask_pgm(const std::filesystem::path& path, int& width, int& height);

// ---------------------------------------------------------------------------
// Keypoint annotations: CSV with 30 coordinate columns (x1, y1, ..., x15, y15,
// named after the keypoint table) plus a trailing image filename column.
// A blank cell means the keypoint is absent.

struct KeypointAnnotation {
  std::array<float, 2 * kKeypointCount> points{};
  std::array<bool, kKeypointCount> present{};
  std::string image;  // filename
};

std::string keypoint_csv_header();
void save_keypoint_csv(const std::filesystem::path& path,
                       const std::vector<KeypointAnnotation>& rows);
std::vector<KeypointAnnotation> load_keypoint_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Dataset manifest: JSON list of sample records (paths + split tag).

struct ManifestSample {
  std::string id;
  std::string color;        // burn: PPM path (relative to the manifest)
  std::string temperature;  // burn: IRF path
  std::string burn_mask;    // burn: mask PGM path
  std::string image;        // keypoint: PGM path
  std::string split;        // "train" or "val"
};

struct Manifest {
  std::string kind;  // "burn" or "keypoint"
  std::uint64_t seed = 0;
  std::string annotations;  // keypoint: CSV path
  std::vector<ManifestSample> samples;
};

void save_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest load_manifest(const std::filesystem::path& path);

/// Loads every sample of a burn manifest back into memory.
std::vector<MultimodalImage> load_burn_samples(const std::filesystem::path& manifest_path,
                                               const Manifest& m, const std::string& split = "");

/// Loads keypoint samples (images + CSV annotations) from a manifest.
std::vector<KeypointSample> load_keypoint_samples(const std::filesystem::path& manifest_path,
                                                  const Manifest& m, const std::string& split = "");

}  // namespace lapinet
