#pragma once

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lapinet/error.hpp"
#include "lapinet/parallel.hpp"
#include "lapinet/tensor.hpp"

namespace lapinet {

/// Convolution is implemented as cross-correlation (no kernel flip), the
/// usual CNN convention. All kernel variants accumulate each output in
/// double and must agree within 1e-5 absolute.
template <typename Scalar>
struct ConvParams {
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel_h = 0;
  Index kernel_w = 0;
  Index stride = 1;
  Index padding = 0;
  Tensor<Scalar> weights;  // (out_channels, in_channels, kernel_h, kernel_w)
  Tensor<Scalar> bias;     // (1, out_channels, 1, 1)
};

struct ConvGeometry {
  Index out_h = 0;
  Index out_w = 0;
};

/// Validates input channels and the output-size formula
/// (H + 2*padding - kernel) / stride + 1, which must be a positive integer.
template <typename Scalar>
ConvGeometry conv_output_geometry(const Shape4& in, const ConvParams<Scalar>& p) {
  if (in.c != p.in_channels)
    throw ShapeError("conv: input has " + std::to_string(in.c) + " channels, params expect " +
                     std::to_string(p.in_channels));
  if (p.stride < 1 || p.padding < 0 || p.kernel_h < 1 || p.kernel_w < 1)
    throw GeometryError("conv: invalid kernel/stride/padding");
  const Index span_h = in.h + 2 * p.padding - p.kernel_h;
  const Index span_w = in.w + 2 * p.padding - p.kernel_w;
  if (span_h < 0 || span_w < 0 || span_h % p.stride != 0 || span_w % p.stride != 0)
    throw GeometryError("conv: kernel " + std::to_string(p.kernel_h) + "x" +
                        std::to_string(p.kernel_w) + " stride " + std::to_string(p.stride) +
                        " padding " + std::to_string(p.padding) +
                        " does not produce an integral output for input " + in.str());
  return {span_h / p.stride + 1, span_w / p.stride + 1};
}

/// Copies x into a zero-padded spatial frame.
template <typename Scalar>
Tensor<Scalar> pad_spatial(const Tensor<Scalar>& x, Index pad) {
  if (pad == 0) return x;
  const Shape4 s = x.shape;
  Tensor<Scalar> xp(Shape4{s.n, s.c, s.h + 2 * pad, s.w + 2 * pad});
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c)
      for (Index h = 0; h < s.h; ++h) {
        const Index src = flat_index(s, n, c, h, 0);
        const Index dst = flat_index(xp.shape, n, c, h + pad, pad);
        xp.data.segment(dst, s.w) = x.data.segment(src, s.w);
      }
  return xp;
}

template <typename Scalar>
struct ConvCache {
  Tensor<Scalar> padded_input;  // input after zero padding (the forward view)
  Shape4 input_shape;           // original, pre-padding shape
};

namespace detail {

using MatrixXdR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Weights as a (out_channels, in_channels*kernel_h*kernel_w) double matrix.
template <typename Scalar>
MatrixXdR weights_matrix(const ConvParams<Scalar>& p) {
  const Index k = p.in_channels * p.kernel_h * p.kernel_w;
  return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
             p.weights.data.data(), p.out_channels, k)
      .template cast<double>();
}

/// Patch matrix of one sample: row (oh*OW + ow), column (ic*KH + kh)*KW + kw.
template <typename Scalar>
void fill_im2col(const Tensor<Scalar>& xp, Index n, const ConvParams<Scalar>& p,
                 const ConvGeometry& g, MatrixXdR& m) {
  const Shape4 s = xp.shape;
  Index row = 0;
  for (Index oh = 0; oh < g.out_h; ++oh)
    for (Index ow = 0; ow < g.out_w; ++ow, ++row) {
      Index col = 0;
      for (Index ic = 0; ic < p.in_channels; ++ic)
        for (Index kh = 0; kh < p.kernel_h; ++kh) {
          const Index base = flat_index(s, n, ic, oh * p.stride + kh, ow * p.stride);
          for (Index kw = 0; kw < p.kernel_w; ++kw, ++col)
            m(row, col) = static_cast<double>(xp.data[base + kw]);
        }
    }
}

/// Direct per-output summation over one contiguous range of (n, oc) planes.
template <typename Scalar>
void conv_direct_planes(const Tensor<Scalar>& xp, const ConvParams<Scalar>& p,
                        const ConvGeometry& g, Tensor<Scalar>& out, Index plane_begin,
                        Index plane_end) {
  const Shape4 s = xp.shape;
  for (Index plane = plane_begin; plane < plane_end; ++plane) {
    const Index n = plane / p.out_channels;
    const Index oc = plane % p.out_channels;
    const double b = static_cast<double>(p.bias.data[oc]);
    for (Index oh = 0; oh < g.out_h; ++oh)
      for (Index ow = 0; ow < g.out_w; ++ow) {
        double acc = b;
        for (Index ic = 0; ic < p.in_channels; ++ic)
          for (Index kh = 0; kh < p.kernel_h; ++kh) {
            const Index xbase = flat_index(s, n, ic, oh * p.stride + kh, ow * p.stride);
            const Index wbase = flat_index(p.weights.shape, oc, ic, kh, 0);
            for (Index kw = 0; kw < p.kernel_w; ++kw)
              acc += static_cast<double>(xp.data[xbase + kw]) *
                     static_cast<double>(p.weights.data[wbase + kw]);
          }
        out(n, oc, oh, ow) = static_cast<Scalar>(acc);
      }
  }
}

template <typename Scalar>
Tensor<Scalar> conv_direct(const Tensor<Scalar>& xp, const ConvParams<Scalar>& p,
                           const ConvGeometry& g, Shape4 out_shape, int /*threads*/) {
  Tensor<Scalar> out(out_shape);
  conv_direct_planes(xp, p, g, out, 0, out_shape.n * p.out_channels);
  return out;
}

template <typename Scalar>
Tensor<Scalar> conv_threaded(const Tensor<Scalar>& xp, const ConvParams<Scalar>& p,
                             const ConvGeometry& g, Shape4 out_shape, int threads) {
  Tensor<Scalar> out(out_shape);
  parallel_for_blocks(out_shape.n * p.out_channels, threads, [&](Index begin, Index end) {
    conv_direct_planes(xp, p, g, out, begin, end);
  });
  return out;
}

/// Patch-unrolling reformulation: per sample, out = im2col(x) * weights^T.
template <typename Scalar>
Tensor<Scalar> conv_im2col(const Tensor<Scalar>& xp, const ConvParams<Scalar>& p,
                           const ConvGeometry& g, Shape4 out_shape, int threads) {
  Tensor<Scalar> out(out_shape);
  const MatrixXdR wm = weights_matrix(p);
  const Eigen::VectorXd bias = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(
                                   p.bias.data.data(), p.out_channels)
                                   .template cast<double>()
                                   .matrix();
  const Index rows = g.out_h * g.out_w;
  parallel_for_blocks(out_shape.n, threads, [&](Index n_begin, Index n_end) {
    MatrixXdR m(rows, wm.cols());
    MatrixXdR r(rows, p.out_channels);
    for (Index n = n_begin; n < n_end; ++n) {
      fill_im2col(xp, n, p, g, m);
      r.noalias() = m * wm.transpose();
      r.rowwise() += bias.transpose();
      for (Index oc = 0; oc < p.out_channels; ++oc) {
        const Index dst = flat_index(out_shape, n, oc, 0, 0);
        for (Index i = 0; i < rows; ++i)
          out.data[dst + i] = static_cast<Scalar>(r(i, oc));
      }
    }
  });
  return out;
}

}  // namespace detail

/// Kernel variant: padded input, params, precomputed geometry, output shape,
/// thread budget. Registered variants must agree within 1e-5 absolute.
template <typename Scalar>
using ConvKernelFn = std::function<Tensor<Scalar>(const Tensor<Scalar>&, const ConvParams<Scalar>&,
                                                  const ConvGeometry&, Shape4, int)>;

template <typename Scalar>
std::map<std::string, ConvKernelFn<Scalar>>& conv_kernel_registry() {
  static std::map<std::string, ConvKernelFn<Scalar>> registry = {
      {"direct", detail::conv_direct<Scalar>},
      {"im2col", detail::conv_im2col<Scalar>},
      {"threaded", detail::conv_threaded<Scalar>},
  };
  return registry;
}

template <typename Scalar>
void register_conv_kernel(const std::string& name, ConvKernelFn<Scalar> fn) {
  conv_kernel_registry<Scalar>()[name] = std::move(fn);
}

template <typename Scalar>
std::pair<Tensor<Scalar>, ConvCache<Scalar>> conv_forward(const Tensor<Scalar>& x,
                                                          const ConvParams<Scalar>& p,
                                                          const std::string& variant = "im2col",
                                                          int threads = 1) {
  const ConvGeometry g = conv_output_geometry(x.shape, p);
  const auto& registry = conv_kernel_registry<Scalar>();
  const auto it = registry.find(variant);
  if (it == registry.end()) throw ConfigError("conv: unknown kernel variant '" + variant + "'");
  Tensor<Scalar> xp = pad_spatial(x, p.padding);
  const Shape4 out_shape{x.shape.n, p.out_channels, g.out_h, g.out_w};
  Tensor<Scalar> out = it->second(xp, p, g, out_shape, threads);
  return {std::move(out), ConvCache<Scalar>{std::move(xp), x.shape}};
}

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> weights;
  Tensor<Scalar> bias;
};

/// Exact gradients of the forward map. grad_bias is the per-channel sum of
/// grad_out; weight and input gradients go through the same patch-matrix
/// reformulation as the forward pass, accumulated in double.
template <typename Scalar>
ConvGrads<Scalar> conv_backward(const Tensor<Scalar>& grad_out, const ConvCache<Scalar>& cache,
                                const ConvParams<Scalar>& p, int threads = 1) {
  using detail::MatrixXdR;
  const Shape4 in_shape = cache.input_shape;
  const ConvGeometry g = conv_output_geometry(in_shape, p);
  const Shape4 expect{in_shape.n, p.out_channels, g.out_h, g.out_w};
  if (grad_out.shape != expect)
    throw ShapeError("conv_backward: grad_out shape " + grad_out.shape.str() +
                     " does not match forward output " + expect.str());

  const Tensor<Scalar>& xp = cache.padded_input;
  const MatrixXdR wm = detail::weights_matrix(p);
  const Index rows = g.out_h * g.out_w;
  const Index k = wm.cols();
  const Index nthreads = std::max<Index>(1, std::min<Index>(threads, in_shape.n));

  std::vector<MatrixXdR> grad_w_parts(static_cast<std::size_t>(nthreads));
  std::vector<Eigen::VectorXd> grad_b_parts(static_cast<std::size_t>(nthreads));
  Eigen::ArrayXd grad_xp(xp.size());
  grad_xp.setZero();

  // One partial accumulator per thread block; blocks own disjoint samples,
  // the final reduction below runs in block order so results are stable for
  // a fixed thread count.
  parallel_for_blocks(nthreads, static_cast<int>(nthreads), [&](Index bi, Index bi_end) {
    for (; bi < bi_end; ++bi) {
      MatrixXdR& gw = grad_w_parts[static_cast<std::size_t>(bi)];
      Eigen::VectorXd& gb = grad_b_parts[static_cast<std::size_t>(bi)];
      gw = MatrixXdR::Zero(p.out_channels, k);
      gb = Eigen::VectorXd::Zero(p.out_channels);
      const Index n_begin = in_shape.n * bi / nthreads;
      const Index n_end = in_shape.n * (bi + 1) / nthreads;
      MatrixXdR m(rows, k);
      MatrixXdR gy(rows, p.out_channels);
      MatrixXdR gm(rows, k);
      for (Index n = n_begin; n < n_end; ++n) {
        detail::fill_im2col(xp, n, p, g, m);
        for (Index oc = 0; oc < p.out_channels; ++oc) {
          const Index src = flat_index(grad_out.shape, n, oc, 0, 0);
          for (Index i = 0; i < rows; ++i) gy(i, oc) = static_cast<double>(grad_out.data[src + i]);
        }
        gw.noalias() += gy.transpose() * m;
        gb.noalias() += gy.colwise().sum().transpose();
        gm.noalias() = gy * wm;
        // col2im scatter; samples are disjoint so blocks never race
        Index row = 0;
        for (Index oh = 0; oh < g.out_h; ++oh)
          for (Index ow = 0; ow < g.out_w; ++ow, ++row) {
            Index col = 0;
            for (Index ic = 0; ic < p.in_channels; ++ic)
              for (Index kh = 0; kh < p.kernel_h; ++kh) {
                const Index base =
                    flat_index(xp.shape, n, ic, oh * p.stride + kh, ow * p.stride);
                for (Index kw = 0; kw < p.kernel_w; ++kw, ++col) grad_xp[base + kw] += gm(row, col);
              }
          }
      }
    }
  });

  MatrixXdR grad_w_total = MatrixXdR::Zero(p.out_channels, k);
  Eigen::VectorXd grad_b_total = Eigen::VectorXd::Zero(p.out_channels);
  for (Index bi = 0; bi < nthreads; ++bi) {
    grad_w_total += grad_w_parts[static_cast<std::size_t>(bi)];
    grad_b_total += grad_b_parts[static_cast<std::size_t>(bi)];
  }

  ConvGrads<Scalar> grads{Tensor<Scalar>(in_shape), Tensor<Scalar>(p.weights.shape),
                          Tensor<Scalar>(p.bias.shape)};
  for (Index i = 0; i < grads.weights.size(); ++i)
    grads.weights.data[i] = static_cast<Scalar>(grad_w_total(i / k, i % k));
  for (Index oc = 0; oc < p.out_channels; ++oc)
    grads.bias.data[oc] = static_cast<Scalar>(grad_b_total[oc]);
  for (Index n = 0; n < in_shape.n; ++n)
    for (Index c = 0; c < in_shape.c; ++c)
      for (Index h = 0; h < in_shape.h; ++h) {
        const Index src = flat_index(xp.shape, n, c, h + p.padding, p.padding);
        const Index dst = flat_index(in_shape, n, c, h, 0);
        for (Index w = 0; w < in_shape.w; ++w)
          grads.input.data[dst + w] = static_cast<Scalar>(grad_xp[src + w]);
      }
  return grads;
}

}  // namespace lapinet
