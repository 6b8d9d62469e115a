#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "lapinet/network.hpp"
#include "lapinet/tensor.hpp"

namespace lapinet {

static_assert(std::endian::native == std::endian::little,
              "weight files are little-endian; big-endian hosts are not supported");

/// Weight file layout (little-endian):
///   magic "LAPI" | u32 version = 1 | u32 tensor count |
///   per tensor: u16 name length, UTF-8 name, u8 rank, u32 dims[rank],
///               raw float32 data (row-major).
/// This implementation always writes rank 4; the reader accepts rank <= 4 and
/// left-pads the shape with 1s.
inline constexpr char kWeightMagic[4] = {'L', 'A', 'P', 'I'};
inline constexpr std::uint32_t kWeightVersion = 1;

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& field) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("weight file truncated while reading " + field);
  return v;
}

}  // namespace detail

/// Writes named tensors to `path` atomically (temp file + rename), so a
/// failed save never leaves a partial artifact behind.
inline void save_named_tensors(
    const std::vector<std::pair<std::string, const Tensor<float>*>>& tensors,
    const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + tmp.string() + "' for writing");
    os.write(kWeightMagic, 4);
    detail::write_pod(os, kWeightVersion);
    detail::write_pod(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
      detail::write_pod(os, static_cast<std::uint16_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      detail::write_pod(os, static_cast<std::uint8_t>(4));
      for (const Index d : {t->shape.n, t->shape.c, t->shape.h, t->shape.w})
        detail::write_pod(os, static_cast<std::uint32_t>(d));
      os.write(reinterpret_cast<const char*>(t->data.data()),
               static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(t->size())));
    }
    if (!os) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "'");
}

/// Reads a weight file back into named float tensors, in file order.
inline std::vector<std::pair<std::string, Tensor<float>>> load_weights(
    const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open weight file '" + path.string() + "'");
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kWeightMagic, 4) != 0)
    throw FormatError("weight file '" + path.string() + "': bad magic bytes");
  const auto version = detail::read_pod<std::uint32_t>(is, "version");
  if (version != kWeightVersion)
    throw FormatError("weight file '" + path.string() + "': unsupported version " +
                      std::to_string(version));
  const auto count = detail::read_pod<std::uint32_t>(is, "tensor count");
  std::vector<std::pair<std::string, Tensor<float>>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string ctx = "tensor " + std::to_string(i);
    const auto name_len = detail::read_pod<std::uint16_t>(is, ctx + " name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw FormatError("weight file truncated while reading " + ctx + " name");
    const auto rank = detail::read_pod<std::uint8_t>(is, ctx + " rank");
    if (rank < 1 || rank > 4)
      throw FormatError("weight file: " + ctx + " has unsupported rank " + std::to_string(rank));
    Index dims[4] = {1, 1, 1, 1};
    for (int d = 0; d < rank; ++d)
      dims[4 - rank + d] = detail::read_pod<std::uint32_t>(is, ctx + " dims");
    Tensor<float> t(Shape4{dims[0], dims[1], dims[2], dims[3]});
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(t.size())));
    if (!is) throw FormatError("weight file truncated while reading " + ctx + " data");
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

/// Saves a network's parameters (float32 storage regardless of Scalar).
template <typename Scalar>
void save_weights(Network<Scalar>& net, const std::filesystem::path& path) {
  std::vector<Tensor<float>> storage;
  std::vector<std::pair<std::string, const Tensor<float>*>> view;
  auto params = net.parameters();
  storage.reserve(params.size());
  view.reserve(params.size());
  for (auto& [name, t] : params) {
    if constexpr (std::is_same_v<Scalar, float>) {
      view.emplace_back(name, t);
    } else {
      storage.push_back(cast_tensor<float>(*t));
      view.emplace_back(name, &storage.back());
    }
  }
  save_named_tensors(view, path);
}

/// Assigns loaded tensors to a network's parameters by name. Every parameter
/// must be present with the right shape; unknown names are rejected.
template <typename Scalar>
void assign_weights(Network<Scalar>& net,
                    const std::vector<std::pair<std::string, Tensor<float>>>& named) {
  auto params = net.parameters();
  if (named.size() != params.size())
    throw FormatError("weight file holds " + std::to_string(named.size()) + " tensors, network has " +
                      std::to_string(params.size()) + " parameters");
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& [name, t] : named) {
    if (!by_name.emplace(name, &t).second)
      throw FormatError("weight file: duplicate tensor name '" + name + "'");
  }
  for (auto& [name, dst] : params) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("weight file: missing tensor '" + name + "'");
    if (it->second->shape != dst->shape)
      throw ShapeError("weight tensor '" + name + "' has shape " + it->second->shape.str() +
                       ", network expects " + dst->shape.str());
    dst->data = it->second->data.template cast<Scalar>();
  }
}

}  // namespace lapinet
