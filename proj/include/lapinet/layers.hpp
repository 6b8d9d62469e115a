#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lapinet/conv.hpp"
#include "lapinet/error.hpp"
#include "lapinet/rng.hpp"
#include "lapinet/tensor.hpp"

namespace lapinet {

// ---------------------------------------------------------------------------
// Pooling

enum class PoolMode { max, average };

struct PoolParams {
  Index window = 2;
  Index stride = 2;
  PoolMode mode = PoolMode::max;
};

struct PoolCache {
  Shape4 input_shape;
  std::vector<Index> argmax;  // flat input index per output element (max mode)
};

/// Pool windows must tile the input exactly: (H - window) % stride == 0.
inline ConvGeometry pool_output_geometry(const Shape4& in, const PoolParams& p) {
  if (p.window < 1 || p.stride < 1) throw GeometryError("pool: window and stride must be >= 1");
  const Index span_h = in.h - p.window;
  const Index span_w = in.w - p.window;
  if (span_h < 0 || span_w < 0 || span_h % p.stride != 0 || span_w % p.stride != 0)
    throw GeometryError("pool: window " + std::to_string(p.window) + " stride " +
                        std::to_string(p.stride) + " does not tile input " + in.str());
  return {span_h / p.stride + 1, span_w / p.stride + 1};
}

template <typename Scalar>
std::pair<Tensor<Scalar>, PoolCache> pool_forward(const Tensor<Scalar>& x, const PoolParams& p) {
  const ConvGeometry g = pool_output_geometry(x.shape, p);
  const Shape4 out_shape{x.shape.n, x.shape.c, g.out_h, g.out_w};
  Tensor<Scalar> out(out_shape);
  PoolCache cache{x.shape, {}};
  if (p.mode == PoolMode::max) cache.argmax.resize(static_cast<std::size_t>(out_shape.elements()));

  Index o = 0;
  for (Index n = 0; n < x.shape.n; ++n)
    for (Index c = 0; c < x.shape.c; ++c)
      for (Index oh = 0; oh < g.out_h; ++oh)
        for (Index ow = 0; ow < g.out_w; ++ow, ++o) {
          if (p.mode == PoolMode::max) {
            // ties break to the first maximum in row-major scan order
            Index best = flat_index(x.shape, n, c, oh * p.stride, ow * p.stride);
            Scalar best_v = x.data[best];
            for (Index kh = 0; kh < p.window; ++kh) {
              const Index base = flat_index(x.shape, n, c, oh * p.stride + kh, ow * p.stride);
              for (Index kw = 0; kw < p.window; ++kw)
                if (x.data[base + kw] > best_v) {
                  best_v = x.data[base + kw];
                  best = base + kw;
                }
            }
            out.data[o] = best_v;
            cache.argmax[static_cast<std::size_t>(o)] = best;
          } else {
            double acc = 0.0;
            for (Index kh = 0; kh < p.window; ++kh) {
              const Index base = flat_index(x.shape, n, c, oh * p.stride + kh, ow * p.stride);
              for (Index kw = 0; kw < p.window; ++kw) acc += static_cast<double>(x.data[base + kw]);
            }
            out.data[o] = static_cast<Scalar>(acc / static_cast<double>(p.window * p.window));
          }
        }
  return {std::move(out), std::move(cache)};
}

/// Max mode routes each gradient to its argmax position; average mode spreads
/// it uniformly over the window. Gradient mass is conserved either way.
template <typename Scalar>
Tensor<Scalar> pool_backward(const Tensor<Scalar>& grad_out, const PoolCache& cache,
                             const PoolParams& p) {
  const ConvGeometry g = pool_output_geometry(cache.input_shape, p);
  const Shape4 expect{cache.input_shape.n, cache.input_shape.c, g.out_h, g.out_w};
  if (grad_out.shape != expect)
    throw ShapeError("pool_backward: grad_out shape " + grad_out.shape.str() + " expected " +
                     expect.str());
  Tensor<Scalar> grad_in(cache.input_shape);
  if (p.mode == PoolMode::max) {
    for (Index o = 0; o < grad_out.size(); ++o)
      grad_in.data[cache.argmax[static_cast<std::size_t>(o)]] += grad_out.data[o];
    return grad_in;
  }
  const Scalar inv = Scalar(1) / static_cast<Scalar>(p.window * p.window);
  Index o = 0;
  for (Index n = 0; n < expect.n; ++n)
    for (Index c = 0; c < expect.c; ++c)
      for (Index oh = 0; oh < g.out_h; ++oh)
        for (Index ow = 0; ow < g.out_w; ++ow, ++o) {
          const Scalar share = grad_out.data[o] * inv;
          for (Index kh = 0; kh < p.window; ++kh) {
            const Index base =
                flat_index(cache.input_shape, n, c, oh * p.stride + kh, ow * p.stride);
            for (Index kw = 0; kw < p.window; ++kw) grad_in.data[base + kw] += share;
          }
        }
  return grad_in;
}

// ---------------------------------------------------------------------------
// ReLU

struct ReluCache {
  std::vector<unsigned char> positive;  // input > 0, strictly; derivative at 0 is 0
};

template <typename Scalar>
std::pair<Tensor<Scalar>, ReluCache> relu_forward(const Tensor<Scalar>& x) {
  Tensor<Scalar> out(x.shape);
  ReluCache cache;
  cache.positive.resize(static_cast<std::size_t>(x.size()));
  for (Index i = 0; i < x.size(); ++i) {
    const bool pos = x.data[i] > Scalar(0);
    cache.positive[static_cast<std::size_t>(i)] = pos;
    out.data[i] = pos ? x.data[i] : Scalar(0);
  }
  return {std::move(out), std::move(cache)};
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& grad_out, const ReluCache& cache) {
  if (static_cast<std::size_t>(grad_out.size()) != cache.positive.size())
    throw ShapeError("relu_backward: grad_out size does not match cache");
  Tensor<Scalar> grad_in(grad_out.shape);
  for (Index i = 0; i < grad_out.size(); ++i)
    grad_in.data[i] = cache.positive[static_cast<std::size_t>(i)] ? grad_out.data[i] : Scalar(0);
  return grad_in;
}

// ---------------------------------------------------------------------------
// Fully connected

template <typename Scalar>
struct DenseParams {
  Index in_dim = 0;
  Index out_dim = 0;
  Tensor<Scalar> weights;  // (out_dim, in_dim, 1, 1)
  Tensor<Scalar> bias;     // (1, out_dim, 1, 1)
};

template <typename Scalar>
struct DenseCache {
  Tensor<Scalar> input;
};

namespace detail {

template <typename Scalar>
Eigen::MatrixXd as_rows(const Tensor<Scalar>& t, Index rows, Index cols) {
  return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
             t.data.data(), rows, cols)
      .template cast<double>();
}

}  // namespace detail

/// y = W x + b per batch row. The input's (c, h, w) block is flattened
/// row-major and must have exactly in_dim elements.
template <typename Scalar>
std::pair<Tensor<Scalar>, DenseCache<Scalar>> dense_forward(const Tensor<Scalar>& x,
                                                            const DenseParams<Scalar>& p) {
  const Index flat = x.shape.c * x.shape.h * x.shape.w;
  if (flat != p.in_dim)
    throw ShapeError("dense: flattened input length " + std::to_string(flat) +
                     " does not match in_dim " + std::to_string(p.in_dim));
  const Eigen::MatrixXd xm = detail::as_rows(x, x.shape.n, p.in_dim);
  const Eigen::MatrixXd wm = detail::as_rows(p.weights, p.out_dim, p.in_dim);
  const Eigen::VectorXd bias = detail::as_rows(p.bias, 1, p.out_dim).row(0).transpose();
  Eigen::MatrixXd y = xm * wm.transpose();
  y.rowwise() += bias.transpose();
  Tensor<Scalar> out(Shape4{x.shape.n, p.out_dim, 1, 1});
  for (Index n = 0; n < x.shape.n; ++n)
    for (Index d = 0; d < p.out_dim; ++d) out.data[n * p.out_dim + d] = static_cast<Scalar>(y(n, d));
  return {std::move(out), DenseCache<Scalar>{x}};
}

template <typename Scalar>
struct DenseGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> weights;
  Tensor<Scalar> bias;
};

template <typename Scalar>
DenseGrads<Scalar> dense_backward(const Tensor<Scalar>& grad_out, const DenseCache<Scalar>& cache,
                                  const DenseParams<Scalar>& p) {
  const Shape4 in_shape = cache.input.shape;
  if (grad_out.shape.n != in_shape.n || grad_out.shape.c != p.out_dim ||
      grad_out.shape.h != 1 || grad_out.shape.w != 1)
    throw ShapeError("dense_backward: grad_out shape " + grad_out.shape.str() +
                     " does not match out_dim " + std::to_string(p.out_dim));
  const Eigen::MatrixXd gy = detail::as_rows(grad_out, in_shape.n, p.out_dim);
  const Eigen::MatrixXd xm = detail::as_rows(cache.input, in_shape.n, p.in_dim);
  const Eigen::MatrixXd wm = detail::as_rows(p.weights, p.out_dim, p.in_dim);
  const Eigen::MatrixXd gw = gy.transpose() * xm;
  const Eigen::VectorXd gb = gy.colwise().sum().transpose();
  const Eigen::MatrixXd gx = gy * wm;

  DenseGrads<Scalar> grads{Tensor<Scalar>(in_shape), Tensor<Scalar>(p.weights.shape),
                           Tensor<Scalar>(p.bias.shape)};
  for (Index i = 0; i < grads.weights.size(); ++i)
    grads.weights.data[i] = static_cast<Scalar>(gw(i / p.in_dim, i % p.in_dim));
  for (Index d = 0; d < p.out_dim; ++d) grads.bias.data[d] = static_cast<Scalar>(gb[d]);
  for (Index n = 0; n < in_shape.n; ++n)
    for (Index i = 0; i < p.in_dim; ++i)
      grads.input.data[n * p.in_dim + i] = static_cast<Scalar>(gx(n, i));
  return grads;
}

// ---------------------------------------------------------------------------
// Dropout

enum class LayerMode { train, inference };

struct DropoutParams {
  double keep_probability = 0.5;  // in (0, 1]
  LayerMode mode = LayerMode::inference;
};

struct DropoutCache {
  std::vector<unsigned char> kept;
  double keep_probability = 1.0;
  bool identity = false;
};

/// Inverted dropout: kept activations are scaled by 1/keep at train time, so
/// inference is the identity map.
template <typename Scalar>
std::pair<Tensor<Scalar>, DropoutCache> dropout_forward(const Tensor<Scalar>& x,
                                                        const DropoutParams& p, Rng& rng) {
  if (p.keep_probability <= 0.0 || p.keep_probability > 1.0)
    throw ConfigError("dropout: keep_probability must be in (0, 1]");
  if (p.mode == LayerMode::inference) return {x, DropoutCache{{}, p.keep_probability, true}};
  DropoutCache cache{{}, p.keep_probability, false};
  cache.kept.resize(static_cast<std::size_t>(x.size()));
  Tensor<Scalar> out(x.shape);
  const Scalar scale = static_cast<Scalar>(1.0 / p.keep_probability);
  for (Index i = 0; i < x.size(); ++i) {
    const bool keep = rng.bernoulli(p.keep_probability);
    cache.kept[static_cast<std::size_t>(i)] = keep;
    out.data[i] = keep ? x.data[i] * scale : Scalar(0);
  }
  return {std::move(out), std::move(cache)};
}

template <typename Scalar>
Tensor<Scalar> dropout_backward(const Tensor<Scalar>& grad_out, const DropoutCache& cache) {
  if (cache.identity) return grad_out;
  if (static_cast<std::size_t>(grad_out.size()) != cache.kept.size())
    throw ShapeError("dropout_backward: grad_out size does not match cache");
  Tensor<Scalar> grad_in(grad_out.shape);
  const Scalar scale = static_cast<Scalar>(1.0 / cache.keep_probability);
  for (Index i = 0; i < grad_out.size(); ++i)
    grad_in.data[i] = cache.kept[static_cast<std::size_t>(i)] ? grad_out.data[i] * scale : Scalar(0);
  return grad_in;
}

// ---------------------------------------------------------------------------
// Softmax

/// Row-wise softmax over the channel axis. Spatial dims must be 1x1. Computed
/// with max subtraction; each output row sums to 1 within 1e-6.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& logits) {
  if (logits.shape.h != 1 || logits.shape.w != 1)
    throw ShapeError("softmax: expected spatial dims 1x1, got " + logits.shape.str());
  const Index k = logits.shape.c;
  Tensor<Scalar> out(logits.shape);
  for (Index n = 0; n < logits.shape.n; ++n) {
    const Index base = n * k;
    double max_logit = static_cast<double>(logits.data[base]);
    for (Index i = 1; i < k; ++i)
      max_logit = std::max(max_logit, static_cast<double>(logits.data[base + i]));
    double sum = 0.0;
    std::vector<double> e(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) {
      e[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(logits.data[base + i]) - max_logit);
      sum += e[static_cast<std::size_t>(i)];
    }
    for (Index i = 0; i < k; ++i)
      out.data[base + i] = static_cast<Scalar>(e[static_cast<std::size_t>(i)] / sum);
  }
  return out;
}

}  // namespace lapinet
