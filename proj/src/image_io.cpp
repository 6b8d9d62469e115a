#include "lapinet/image_io.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lapinet/error.hpp"

namespace lapinet {

static_assert(std::endian::native == std::endian::little,
              "IRF1 temperature maps are little-endian");

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + tmp.string() + "' for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "'");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

namespace {

[[noreturn]] void format_fail(const std::filesystem::path& path, std::size_t offset,
                              const std::string& what) {
  throw FormatError("'" + path.string() + "' at byte " + std::to_string(offset) + ": " + what);
}

/// PNM header tokenizer: skips whitespace and '#' comment lines.
class PnmReader {
 public:
  PnmReader(std::string bytes, std::filesystem::path path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  void expect_magic(const char* magic) {
    if (bytes_.size() < 2 || bytes_[0] != magic[0] || bytes_[1] != magic[1])
      format_fail(path_, 0, std::string("expected magic '") + magic + "'");
    pos_ = 2;
  }

  int next_int(const char* field) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(static_cast<unsigned char>(bytes_[pos_])))
      format_fail(path_, pos_, std::string("expected integer ") + field);
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1 << 28) format_fail(path_, pos_, std::string(field) + " out of range");
      ++pos_;
    }
    return static_cast<int>(v);
  }

  /// Exactly one whitespace byte separates the header from raster data.
  const std::uint8_t* raster(std::size_t n, const char* what) {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      format_fail(path_, pos_, "expected whitespace before raster");
    ++pos_;
    if (bytes_.size() - pos_ < n)
      format_fail(path_, bytes_.size(), std::string("truncated ") + what + " raster");
    return reinterpret_cast<const std::uint8_t*>(bytes_.data()) + pos_;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string bytes_;
  std::filesystem::path path_;
  std::size_t pos_ = 0;
};

void check_plane_size(int width, int height, std::size_t got, std::size_t per_pixel) {
  if (width < 1 || height < 1) throw FormatError("image dimensions must be positive");
  if (got != per_pixel * static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw ShapeError("pixel buffer does not match image dimensions");
}

}  // namespace

void save_ppm(const std::filesystem::path& path, int width, int height,
              const std::vector<std::uint8_t>& planes) {
  check_plane_size(width, height, planes.size(), 3);
  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  out.reserve(out.size() + 3 * plane);
  for (std::size_t p = 0; p < plane; ++p) {
    out.push_back(static_cast<char>(planes[p]));
    out.push_back(static_cast<char>(planes[plane + p]));
    out.push_back(static_cast<char>(planes[2 * plane + p]));
  }
  write_file_atomic(path, out);
}

RgbImage load_ppm(const std::filesystem::path& path) {
  PnmReader r(read_file(path), path);
  r.expect_magic("P6");
  RgbImage img;
  img.width = r.next_int("width");
  img.height = r.next_int("height");
  const int maxval = r.next_int("maxval");
  if (maxval != 255) throw FormatError("'" + path.string() + "': unsupported maxval " + std::to_string(maxval));
  const std::size_t plane = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  const std::uint8_t* data = r.raster(3 * plane, "PPM");
  img.planes.resize(3 * plane);
  for (std::size_t p = 0; p < plane; ++p) {
    img.planes[p] = data[3 * p];
    img.planes[plane + p] = data[3 * p + 1];
    img.planes[2 * plane + p] = data[3 * p + 2];
  }
  return img;
}

void save_pgm(const std::filesystem::path& path, int width, int height,
              const std::vector<std::uint8_t>& pixels) {
  check_plane_size(width, height, pixels.size(), 1);
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  write_file_atomic(path, out);
}

GrayImage load_pgm(const std::filesystem::path& path) {
  PnmReader r(read_file(path), path);
  r.expect_magic("P5");
  GrayImage img;
  img.width = r.next_int("width");
  img.height = r.next_int("height");
  const int maxval = r.next_int("maxval");
  if (maxval != 255) throw FormatError("'" + path.string() + "': unsupported maxval " + std::to_string(maxval));
  const std::size_t plane = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  const std::uint8_t* data = r.raster(plane, "PGM");
  img.pixels.assign(data, data + plane);
  return img;
}

void save_irf(const std::filesystem::path& path, int width, int height,
              const std::vector<float>& celsius) {
  check_plane_size(width, height, celsius.size(), 1);
  std::string out = "IRF1";
  const auto put_u32 = [&out](std::uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), 4);
  };
  put_u32(static_cast<std::uint32_t>(width));
  put_u32(static_cast<std::uint32_t>(height));
  out.append(reinterpret_cast<const char*>(celsius.data()), celsius.size() * sizeof(float));
  write_file_atomic(path, out);
}

TemperatureMap load_irf(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "IRF1", 4) != 0)
    format_fail(path, 0, "expected magic 'IRF1'");
  if (bytes.size() < 12) format_fail(path, bytes.size(), "truncated header");
  std::uint32_t w = 0, h = 0;
  std::memcpy(&w, bytes.data() + 4, 4);
  std::memcpy(&h, bytes.data() + 8, 4);
  if (w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20))
    format_fail(path, 4, "invalid dimensions");
  const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() != 12 + count * sizeof(float))
    format_fail(path, bytes.size(), "raster size does not match dimensions");
  TemperatureMap map;
  map.width = static_cast<int>(w);
  map.height = static_cast<int>(h);
  map.celsius.resize(count);
  std::memcpy(map.celsius.data(), bytes.data() + 12, count * sizeof(float));
  return map;
}

void save_mask_pgm(const std::filesystem::path& path, int width, int height,
                   const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> encoded(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    switch (labels[i]) {
      case 0: encoded[i] = 0; break;
      case 1: encoded[i] = 128; break;
      case 2: encoded[i] = 255; break;
      default:
        throw DataError("mask labels must be 0, 1 or 2, got " + std::to_string(labels[i]));
    }
  }
  save_pgm(path, width, height, encoded);
}

std::vector<std::uint8_t> load_mask_pgm(const std::filesystem::path& path, int& width, int& height) {
  const GrayImage img = load_pgm(path);
  width = img.width;
  height = img.height;
  std::vector<std::uint8_t> labels(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    switch (img.pixels[i]) {
      case 0: labels[i] = 0; break;
      case 128: labels[i] = 1; break;
      case 255: labels[i] = 2; break;
      default:
        throw FormatError("'" + path.string() + "': mask value " + std::to_string(img.pixels[i]) +
                          " is not one of {0, 128, 255}");
    }
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Keypoint CSV

std::string keypoint_csv_header() {
  std::string header;
  for (const char* name : kKeypointNames) {
    header += std::string(name) + "_x," + name + "_y,";
  }
  header += "Image";
  return header;
}

void save_keypoint_csv(const std::filesystem::path& path,
                       const std::vector<KeypointAnnotation>& rows) {
  std::string out = keypoint_csv_header() + "\n";
  char buf[64];
  for (const auto& row : rows) {
    for (int k = 0; k < kKeypointCount; ++k) {
      if (row.present[static_cast<std::size_t>(k)]) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,", row.points[static_cast<std::size_t>(2 * k)],
                      row.points[static_cast<std::size_t>(2 * k + 1)]);
        out += buf;
      } else {
        out += ",,";  // blank cells mark an absent keypoint
      }
    }
    out += row.image + "\n";
  }
  write_file_atomic(path, out);
}

std::vector<KeypointAnnotation> load_keypoint_csv(const std::filesystem::path& path) {
  std::istringstream is(read_file(path));
  std::string line;
  if (!std::getline(is, line))
    throw FormatError("'" + path.string() + "': missing header row");
  if (line != keypoint_csv_header())
    throw FormatError("'" + path.string() + "': unexpected header row");
  std::vector<KeypointAnnotation> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        cells.push_back(line.substr(start));
        break;
      }
      cells.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (cells.size() != 2 * kKeypointCount + 1)
      throw FormatError("'" + path.string() + "' line " + std::to_string(line_no) + ": expected " +
                        std::to_string(2 * kKeypointCount + 1) + " columns, got " +
                        std::to_string(cells.size()));
    KeypointAnnotation row;
    for (int k = 0; k < kKeypointCount; ++k) {
      const std::string& xs = cells[static_cast<std::size_t>(2 * k)];
      const std::string& ys = cells[static_cast<std::size_t>(2 * k + 1)];
      if (xs.empty() != ys.empty())
        throw FormatError("'" + path.string() + "' line " + std::to_string(line_no) +
                          ": half-blank keypoint " + kKeypointNames[static_cast<std::size_t>(k)]);
      if (xs.empty()) continue;
      try {
        row.points[static_cast<std::size_t>(2 * k)] = std::stof(xs);
        row.points[static_cast<std::size_t>(2 * k + 1)] = std::stof(ys);
      } catch (const std::exception&) {
        throw FormatError("'" + path.string() + "' line " + std::to_string(line_no) +
                          ": malformed coordinate");
      }
      row.present[static_cast<std::size_t>(k)] = true;
    }
    row.image = cells.back();
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> known,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw FormatError("manifest: unknown key '" + key + "' in " + where);
  }
}

}  // namespace

void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  json j;
  j["kind"] = m.kind;
  j["seed"] = m.seed;
  if (!m.annotations.empty()) j["annotations"] = m.annotations;
  j["samples"] = json::array();
  for (const auto& s : m.samples) {
    json e;
    e["id"] = s.id;
    if (!s.color.empty()) e["color"] = s.color;
    if (!s.temperature.empty()) e["temperature"] = s.temperature;
    if (!s.burn_mask.empty()) e["burn_mask"] = s.burn_mask;
    if (!s.image.empty()) e["image"] = s.image;
    e["split"] = s.split;
    j["samples"].push_back(std::move(e));
  }
  write_file_atomic(path, j.dump(2) + "\n");
}

Manifest load_manifest(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
  reject_unknown_keys(j, {"kind", "seed", "annotations", "samples"}, "manifest root");
  Manifest m;
  m.kind = j.at("kind").get<std::string>();
  if (m.kind != "burn" && m.kind != "keypoint")
    throw FormatError("manifest kind must be 'burn' or 'keypoint', got '" + m.kind + "'");
  m.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("annotations")) m.annotations = j["annotations"].get<std::string>();
  for (const auto& e : j.at("samples")) {
    reject_unknown_keys(e, {"id", "color", "temperature", "burn_mask", "image", "split"}, "sample");
    ManifestSample s;
    s.id = e.at("id").get<std::string>();
    if (e.contains("color")) s.color = e["color"].get<std::string>();
    if (e.contains("temperature")) s.temperature = e["temperature"].get<std::string>();
    if (e.contains("burn_mask")) s.burn_mask = e["burn_mask"].get<std::string>();
    if (e.contains("image")) s.image = e["image"].get<std::string>();
    s.split = e.at("split").get<std::string>();
    if (s.split != "train" && s.split != "val")
      throw FormatError("manifest sample '" + s.id + "': split must be 'train' or 'val'");
    m.samples.push_back(std::move(s));
  }
  return m;
}

std::vector<MultimodalImage> load_burn_samples(const std::filesystem::path& manifest_path,
                                               const Manifest& m, const std::string& split) {
  const std::filesystem::path dir = manifest_path.parent_path();
  std::vector<MultimodalImage> images;
  for (const auto& s : m.samples) {
    if (!split.empty() && s.split != split) continue;
    MultimodalImage img;
    img.id = s.id;
    const RgbImage rgb = load_ppm(dir / s.color);
    img.width = rgb.width;
    img.height = rgb.height;
    img.color = rgb.planes;
    const TemperatureMap t = load_irf(dir / s.temperature);
    if (t.width != img.width || t.height != img.height)
      throw FormatError("sample '" + s.id + "': temperature map size differs from color image");
    img.temperature = t.celsius;
    if (!s.burn_mask.empty()) {
      int mw = 0, mh = 0;
      img.burn_mask = load_mask_pgm(dir / s.burn_mask, mw, mh);
      if (mw != img.width || mh != img.height)
        throw FormatError("sample '" + s.id + "': burn mask size differs from color image");
    }
    images.push_back(std::move(img));
  }
  return images;
}

std::vector<KeypointSample> load_keypoint_samples(const std::filesystem::path& manifest_path,
                                                  const Manifest& m, const std::string& split) {
  const std::filesystem::path dir = manifest_path.parent_path();
  if (m.annotations.empty()) throw FormatError("keypoint manifest has no annotations file");
  std::map<std::string, const KeypointAnnotation*> by_image;
  const auto annotations = load_keypoint_csv(dir / m.annotations);
  for (const auto& a : annotations) by_image[a.image] = &a;

  std::vector<KeypointSample> out;
  for (const auto& s : m.samples) {
    if (!split.empty() && s.split != split) continue;
    const GrayImage img = load_pgm(dir / s.image);
    const auto it = by_image.find(s.image);
    if (it == by_image.end())
      throw FormatError("sample '" + s.id + "': no annotation row for image '" + s.image + "'");
    KeypointSample sample;
    sample.width = img.width;
    sample.height = img.height;
    sample.image = img.pixels;
    sample.points = it->second->points;
    sample.present = it->second->present;
    sample.id = s.id;
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace lapinet
