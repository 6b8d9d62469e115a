#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>

#include "lapinet/error.hpp"
#include "lapinet/rng.hpp"

namespace lapinet {

using Index = Eigen::Index;

/// Shape of a rank-4 tensor in (batch, channels, height, width) order.
/// All framework values are rank 4; vectors travel as (n, c, 1, 1).
struct Shape4 {
  Index n = 1;
  Index c = 1;
  Index h = 1;
  Index w = 1;

  /// Element count. Throws SizeError if a dimension is not positive or the
  /// product overflows Index.
  Index elements() const {
    if (n < 1 || c < 1 || h < 1 || w < 1)
      throw SizeError("Shape4: dimensions must be positive, got " + str());
    constexpr Index kMax = std::numeric_limits<Index>::max();
    Index total = n;
    for (const Index d : {c, h, w}) {
      if (total > kMax / d) throw SizeError("Shape4: element count overflows, " + str());
      total *= d;
    }
    return total;
  }

  bool operator==(const Shape4&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) +
           ", " + std::to_string(w) + ")";
  }
};

/// Flat offset of (n, c, h, w) in the canonical row-major layout.
constexpr Index flat_index(const Shape4& s, Index n, Index c, Index h, Index w) {
  return ((n * s.c + c) * s.h + h) * s.w + w;
}

/// Inverse of flat_index.
constexpr std::array<Index, 4> unflatten_index(const Shape4& s, Index flat) {
  const Index w = flat % s.w;
  flat /= s.w;
  const Index h = flat % s.h;
  flat /= s.h;
  const Index c = flat % s.c;
  flat /= s.c;
  return {flat, c, h, w};
}

/// Dense rank-4 tensor. Data lives in one contiguous Eigen array, row-major
/// in (n, c, h, w); layers and kernels all assume this layout.
template <typename Scalar>
struct Tensor {
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Shape4 shape{};
  Storage data;

  Tensor() : data(1) { data[0] = Scalar(0); }

  explicit Tensor(const Shape4& s) : shape(s), data(Storage::Zero(s.elements())) {}

  Tensor(const Shape4& s, Storage values) : shape(s), data(std::move(values)) {
    if (data.size() != shape.elements())
      throw ShapeError("Tensor: data length " + std::to_string(data.size()) +
                       " does not match shape " + shape.str());
  }

  Scalar& operator()(Index n, Index c, Index h, Index w) {
    return data[flat_index(shape, n, c, h, w)];
  }
  Scalar operator()(Index n, Index c, Index h, Index w) const {
    return data[flat_index(shape, n, c, h, w)];
  }

  Index size() const { return data.size(); }
};

template <typename Scalar>
Tensor<Scalar> zeros(const Shape4& shape) {
  return Tensor<Scalar>(shape);
}

template <typename Scalar>
Tensor<Scalar> full(const Shape4& shape, Scalar value) {
  Tensor<Scalar> t(shape);
  t.data.setConstant(value);
  return t;
}

/// Applies f to every element; shape is preserved.
template <typename Scalar, typename F>
Tensor<Scalar> elementwise_map(const Tensor<Scalar>& t, F&& f) {
  Tensor<Scalar> out(t.shape);
  for (Index i = 0; i < t.size(); ++i) out.data[i] = f(t.data[i]);
  return out;
}

/// Mean over the spatial plane of each (n, c); output shape (n, c, 1, 1).
/// Accumulates in double so a constant plane reduces to its value exactly.
template <typename Scalar>
Tensor<Scalar> reduce_mean_spatial(const Tensor<Scalar>& t) {
  Tensor<Scalar> out(Shape4{t.shape.n, t.shape.c, 1, 1});
  const Index plane = t.shape.h * t.shape.w;
  for (Index i = 0; i < t.shape.n * t.shape.c; ++i) {
    const double sum = t.data.segment(i * plane, plane).template cast<double>().sum();
    out.data[i] = static_cast<Scalar>(sum / static_cast<double>(plane));
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> random_uniform(const Shape4& shape, Scalar lo, Scalar hi, Rng& rng) {
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.size(); ++i)
    t.data[i] = static_cast<Scalar>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
  return t;
}

template <typename To, typename From>
Tensor<To> cast_tensor(const Tensor<From>& t) {
  Tensor<To> out(t.shape);
  out.data = t.data.template cast<To>();
  return out;
}

}  // namespace lapinet
