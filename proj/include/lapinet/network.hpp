#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lapinet/layers.hpp"

namespace lapinet {

enum class LayerKind {
  conv,
  pool,
  relu,
  dense,
  dropout,
  mlpconv_block,
  global_avg_pool,
  flatten,
  softmax_head,
  linear_head,
};

/// One entry of a declarative network description. Only the fields relevant
/// to `kind` are meaningful; use the factory helpers.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  Index out_channels = 0;
  Index kernel = 0;
  Index stride = 1;
  Index padding = 0;
  Index mlp_width = 0;
  PoolMode pool_mode = PoolMode::max;
  Index pool_window = 2;
  Index pool_stride = 2;
  Index out_dim = 0;
  double keep_probability = 1.0;

  static LayerSpec conv(Index out_channels, Index kernel, Index stride = 1, Index padding = 0) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.out_channels = out_channels;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
  }
  static LayerSpec pool(PoolMode mode = PoolMode::max, Index window = 2, Index stride = 2) {
    LayerSpec s;
    s.kind = LayerKind::pool;
    s.pool_mode = mode;
    s.pool_window = window;
    s.pool_stride = stride;
    return s;
  }
  static LayerSpec relu() {
    LayerSpec s;
    s.kind = LayerKind::relu;
    return s;
  }
  static LayerSpec dense(Index out_dim) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.out_dim = out_dim;
    return s;
  }
  static LayerSpec dropout(double keep_probability) {
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.keep_probability = keep_probability;
    return s;
  }
  /// k x k conv + two 1x1 convs, each followed by ReLU. `width` is the
  /// channel count of the first two convs, `out_channels` of the last.
  static LayerSpec mlpconv(Index kernel, Index width, Index out_channels) {
    LayerSpec s;
    s.kind = LayerKind::mlpconv_block;
    s.kernel = kernel;
    s.mlp_width = width;
    s.out_channels = out_channels;
    return s;
  }
  static LayerSpec global_avg_pool() {
    LayerSpec s;
    s.kind = LayerKind::global_avg_pool;
    return s;
  }
  static LayerSpec flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
  }
  static LayerSpec softmax_head() {
    LayerSpec s;
    s.kind = LayerKind::softmax_head;
    return s;
  }
  /// Affine output layer for regression heads.
  static LayerSpec linear_head(Index out_dim) {
    LayerSpec s;
    s.kind = LayerKind::linear_head;
    s.out_dim = out_dim;
    return s;
  }
};

/// Declarative architecture: input geometry, ordered layers, output width.
/// The batch component of `input` is nominal; forward accepts any batch.
struct NetworkSpec {
  Shape4 input{1, 1, 1, 1};
  std::vector<LayerSpec> layers;
  Index output_dim = 0;

  /// Lowers mlpconv blocks into primitive conv/relu entries.
  std::vector<LayerSpec> expanded() const {
    std::vector<LayerSpec> out;
    out.reserve(layers.size() * 2);
    for (const LayerSpec& l : layers) {
      if (l.kind != LayerKind::mlpconv_block) {
        out.push_back(l);
        continue;
      }
      out.push_back(LayerSpec::conv(l.mlp_width, l.kernel));
      out.push_back(LayerSpec::relu());
      out.push_back(LayerSpec::conv(l.mlp_width, 1));
      out.push_back(LayerSpec::relu());
      out.push_back(LayerSpec::conv(l.out_channels, 1));
      out.push_back(LayerSpec::relu());
    }
    return out;
  }
};

/// Conv kernel selection threaded through forward/backward.
struct KernelPolicy {
  std::string conv_variant = "im2col";
  int threads = 1;
};

template <typename Scalar>
class Network {
 public:
  explicit Network(NetworkSpec spec) : spec_(std::move(spec)) { build(); }

  const NetworkSpec& spec() const { return spec_; }
  LayerMode mode() const { return mode_; }
  void set_mode(LayerMode m) { mode_ = m; }
  KernelPolicy& kernel_policy() { return policy_; }
  const KernelPolicy& kernel_policy() const { return policy_; }

  /// Glorot-uniform weights (+- sqrt(6 / (fan_in + fan_out))), zero biases.
  void init_params(Rng& rng) {
    for (auto& layer : layers_) {
      std::visit(
          [&rng](auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, ConvL>) {
              const double fan_in =
                  static_cast<double>(l.p.in_channels * l.p.kernel_h * l.p.kernel_w);
              const double fan_out =
                  static_cast<double>(l.p.out_channels * l.p.kernel_h * l.p.kernel_w);
              const double bound = std::sqrt(6.0 / (fan_in + fan_out));
              for (Index i = 0; i < l.p.weights.size(); ++i)
                l.p.weights.data[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
              l.p.bias.data.setZero();
            } else if constexpr (std::is_same_v<T, DenseL>) {
              const double bound =
                  std::sqrt(6.0 / static_cast<double>(l.p.in_dim + l.p.out_dim));
              for (Index i = 0; i < l.p.weights.size(); ++i)
                l.p.weights.data[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
              l.p.bias.data.setZero();
            }
          },
          layer);
    }
  }

  /// Ordered (name, tensor) views over every parameter.
  std::vector<std::pair<std::string, Tensor<Scalar>*>> parameters() {
    std::vector<std::pair<std::string, Tensor<Scalar>*>> out;
    for (auto& layer : layers_) {
      std::visit(
          [&out](auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, ConvL> || std::is_same_v<T, DenseL>) {
              out.emplace_back(l.name + ".weight", &l.p.weights);
              out.emplace_back(l.name + ".bias", &l.p.bias);
            }
          },
          layer);
    }
    return out;
  }

  Index parameter_count() {
    Index total = 0;
    for (const auto& [name, t] : parameters()) total += t->size();
    return total;
  }

  /// Applies the layers in order. In train mode each layer records the cache
  /// its backward pass needs; dropout then requires a random source.
  Tensor<Scalar> forward(const Tensor<Scalar>& x, Rng* dropout_rng = nullptr) {
    if (x.shape.c != spec_.input.c || x.shape.h != spec_.input.h || x.shape.w != spec_.input.w)
      throw ShapeError("forward: input " + x.shape.str() + " does not match spec input " +
                       spec_.input.str());
    const bool caching = mode_ == LayerMode::train;
    Tensor<Scalar> cur = x;
    for (auto& layer : layers_) {
      cur = std::visit([&](auto& l) { return apply_forward(l, cur, caching, dropout_rng); }, layer);
    }
    return cur;
  }

  /// Walks the layers in reverse, consuming the caches of the previous
  /// forward call. For a classifier the incoming gradient must be taken with
  /// respect to the logits (cross_entropy_loss supplies exactly that); the
  /// softmax head itself is gradient-transparent.
  std::map<std::string, Tensor<Scalar>> backward(const Tensor<Scalar>& grad_out) {
    std::map<std::string, Tensor<Scalar>> grads;
    Tensor<Scalar> cur = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      cur = std::visit([&](auto& l) { return apply_backward(l, cur, grads); }, *it);
    }
    return grads;
  }

  /// Output shape for a given batch size (known statically from the spec).
  Shape4 output_shape(Index batch) const {
    Shape4 s = shapes_.back();
    s.n = batch;
    return s;
  }

  /// Per-layer output shapes computed at build time (nominal batch 1).
  const std::vector<Shape4>& layer_shapes() const { return shapes_; }

  /// Kind of the head layer (softmax_head or linear_head).
  LayerKind head_kind() const { return head_kind_; }

 private:
  struct ConvL {
    std::string name;
    ConvParams<Scalar> p;
    std::optional<ConvCache<Scalar>> cache;
  };
  struct PoolL {
    PoolParams p;
    std::optional<PoolCache> cache;
  };
  struct ReluL {
    std::optional<ReluCache> cache;
  };
  struct DenseL {
    std::string name;
    DenseParams<Scalar> p;
    std::optional<DenseCache<Scalar>> cache;
  };
  struct DropL {
    DropoutParams p;
    std::optional<DropoutCache> cache;
  };
  struct FlattenL {
    std::optional<Shape4> in_shape;
  };
  struct GapL {
    std::optional<Shape4> in_shape;
  };
  struct SoftmaxL {};

  using Layer = std::variant<ConvL, PoolL, ReluL, DenseL, DropL, FlattenL, GapL, SoftmaxL>;

  NetworkSpec spec_;
  std::vector<Layer> layers_;
  std::vector<Shape4> shapes_;
  LayerMode mode_ = LayerMode::train;
  KernelPolicy policy_;
  LayerKind head_kind_ = LayerKind::softmax_head;

  /// Instantiates runtime layers and chains shapes; every mismatch is a
  /// build-time error so a validated network cannot shape-fail on a
  /// spec-conforming input.
  void build() {
    const std::vector<LayerSpec> expanded = spec_.expanded();
    if (expanded.empty()) throw ConfigError("network: no layers");
    Shape4 shape{1, spec_.input.c, spec_.input.h, spec_.input.w};
    Index conv_count = 0;
    Index dense_count = 0;
    bool head_seen = false;
    for (const LayerSpec& l : expanded) {
      if (head_seen) throw ConfigError("network: layers after the head");
      switch (l.kind) {
        case LayerKind::conv: {
          ConvL layer;
          layer.name = "conv" + std::to_string(++conv_count);
          layer.p.in_channels = shape.c;
          layer.p.out_channels = l.out_channels;
          layer.p.kernel_h = l.kernel;
          layer.p.kernel_w = l.kernel;
          layer.p.stride = l.stride;
          layer.p.padding = l.padding;
          layer.p.weights = Tensor<Scalar>({l.out_channels, shape.c, l.kernel, l.kernel});
          layer.p.bias = Tensor<Scalar>({1, l.out_channels, 1, 1});
          const ConvGeometry g = conv_output_geometry(shape, layer.p);
          shape = {1, l.out_channels, g.out_h, g.out_w};
          layers_.emplace_back(std::move(layer));
          break;
        }
        case LayerKind::pool: {
          PoolL layer{PoolParams{l.pool_window, l.pool_stride, l.pool_mode}, std::nullopt};
          const ConvGeometry g = pool_output_geometry(shape, layer.p);
          shape = {1, shape.c, g.out_h, g.out_w};
          layers_.emplace_back(std::move(layer));
          break;
        }
        case LayerKind::relu:
          layers_.emplace_back(ReluL{});
          break;
        case LayerKind::dropout:
          if (l.keep_probability <= 0.0 || l.keep_probability > 1.0)
            throw ConfigError("network: dropout keep_probability must be in (0, 1]");
          layers_.emplace_back(DropL{DropoutParams{l.keep_probability, mode_}, std::nullopt});
          break;
        case LayerKind::flatten:
          layers_.emplace_back(FlattenL{});
          shape = {1, shape.c * shape.h * shape.w, 1, 1};
          break;
        case LayerKind::global_avg_pool:
          layers_.emplace_back(GapL{});
          shape = {1, shape.c, 1, 1};
          break;
        case LayerKind::dense:
        case LayerKind::linear_head: {
          DenseL layer;
          layer.name = "dense" + std::to_string(++dense_count);
          layer.p.in_dim = shape.c * shape.h * shape.w;
          layer.p.out_dim = l.out_dim;
          layer.p.weights = Tensor<Scalar>({l.out_dim, layer.p.in_dim, 1, 1});
          layer.p.bias = Tensor<Scalar>({1, l.out_dim, 1, 1});
          shape = {1, l.out_dim, 1, 1};
          layers_.emplace_back(std::move(layer));
          if (l.kind == LayerKind::linear_head) {
            head_seen = true;
            head_kind_ = LayerKind::linear_head;
          }
          break;
        }
        case LayerKind::softmax_head:
          if (shape.h != 1 || shape.w != 1)
            throw ShapeError("network: softmax head needs 1x1 spatial dims, got " + shape.str());
          layers_.emplace_back(SoftmaxL{});
          head_seen = true;
          head_kind_ = LayerKind::softmax_head;
          break;
        case LayerKind::mlpconv_block:
          throw ConfigError("network: mlpconv block must be expanded");  // unreachable
      }
      shapes_.push_back(shape);
    }
    if (!head_seen) throw ConfigError("network: missing softmax or linear head");
    if (shape.c != spec_.output_dim || shape.h != 1 || shape.w != 1)
      throw ShapeError("network: head produces " + shape.str() + ", spec output_dim is " +
                       std::to_string(spec_.output_dim));
  }

  Tensor<Scalar> apply_forward(ConvL& l, const Tensor<Scalar>& x, bool caching, Rng*) {
    auto [out, cache] = conv_forward(x, l.p, policy_.conv_variant, policy_.threads);
    if (caching) l.cache = std::move(cache);
    return std::move(out);
  }
  Tensor<Scalar> apply_forward(PoolL& l, const Tensor<Scalar>& x, bool caching, Rng*) {
    auto [out, cache] = pool_forward(x, l.p);
    if (caching) l.cache = std::move(cache);
    return std::move(out);
  }
  Tensor<Scalar> apply_forward(ReluL& l, const Tensor<Scalar>& x, bool caching, Rng*) {
    auto [out, cache] = relu_forward(x);
    if (caching) l.cache = std::move(cache);
    return std::move(out);
  }
  Tensor<Scalar> apply_forward(DenseL& l, const Tensor<Scalar>& x, bool caching, Rng*) {
    auto [out, cache] = dense_forward(x, l.p);
    if (caching) l.cache = std::move(cache);
    return std::move(out);
  }
  Tensor<Scalar> apply_forward(DropL& l, const Tensor<Scalar>& x, bool caching, Rng* rng) {
    l.p.mode = mode_;
    if (mode_ == LayerMode::train && rng == nullptr)
      throw ConfigError("forward: dropout in train mode needs a random source");
    Rng fallback(0);
    auto [out, cache] = dropout_forward(x, l.p, rng ? *rng : fallback);
    if (caching) l.cache = std::move(cache);
    return std::move(out);
  }
  Tensor<Scalar> apply_forward(FlattenL& l, const Tensor<Scalar>& x, bool caching, Rng*) {
    if (caching) l.in_shape = x.shape;
    return Tensor<Scalar>(Shape4{x.shape.n, x.shape.c * x.shape.h * x.shape.w, 1, 1}, x.data);
  }
  Tensor<Scalar> apply_forward(GapL& l, const Tensor<Scalar>& x, bool caching, Rng*) {
    if (caching) l.in_shape = x.shape;
    return reduce_mean_spatial(x);
  }
  Tensor<Scalar> apply_forward(SoftmaxL&, const Tensor<Scalar>& x, bool, Rng*) {
    return softmax(x);
  }

  template <typename L>
  [[noreturn]] static void missing_cache(const L&) {
    throw Error("backward: no cached forward pass (backward may be called once per forward)");
  }

  Tensor<Scalar> apply_backward(ConvL& l, const Tensor<Scalar>& gy,
                                std::map<std::string, Tensor<Scalar>>& grads) {
    if (!l.cache) missing_cache(l);
    ConvGrads<Scalar> g = conv_backward(gy, *l.cache, l.p, policy_.threads);
    l.cache.reset();
    grads.emplace(l.name + ".weight", std::move(g.weights));
    grads.emplace(l.name + ".bias", std::move(g.bias));
    return std::move(g.input);
  }
  Tensor<Scalar> apply_backward(PoolL& l, const Tensor<Scalar>& gy,
                                std::map<std::string, Tensor<Scalar>>&) {
    if (!l.cache) missing_cache(l);
    Tensor<Scalar> gx = pool_backward(gy, *l.cache, l.p);
    l.cache.reset();
    return gx;
  }
  Tensor<Scalar> apply_backward(ReluL& l, const Tensor<Scalar>& gy,
                                std::map<std::string, Tensor<Scalar>>&) {
    if (!l.cache) missing_cache(l);
    Tensor<Scalar> gx = relu_backward(gy, *l.cache);
    l.cache.reset();
    return gx;
  }
  Tensor<Scalar> apply_backward(DenseL& l, const Tensor<Scalar>& gy,
                                std::map<std::string, Tensor<Scalar>>& grads) {
    if (!l.cache) missing_cache(l);
    DenseGrads<Scalar> g = dense_backward(gy, *l.cache, l.p);
    l.cache.reset();
    grads.emplace(l.name + ".weight", std::move(g.weights));
    grads.emplace(l.name + ".bias", std::move(g.bias));
    return std::move(g.input);
  }
  Tensor<Scalar> apply_backward(DropL& l, const Tensor<Scalar>& gy,
                                std::map<std::string, Tensor<Scalar>>&) {
    if (!l.cache) missing_cache(l);
    Tensor<Scalar> gx = dropout_backward(gy, *l.cache);
    l.cache.reset();
    return gx;
  }
  Tensor<Scalar> apply_backward(FlattenL& l, const Tensor<Scalar>& gy,
                                std::map<std::string, Tensor<Scalar>>&) {
    if (!l.in_shape) missing_cache(l);
    Shape4 s = *l.in_shape;
    l.in_shape.reset();
    return Tensor<Scalar>(s, gy.data);
  }
  Tensor<Scalar> apply_backward(GapL& l, const Tensor<Scalar>& gy,
                                std::map<std::string, Tensor<Scalar>>&) {
    if (!l.in_shape) missing_cache(l);
    const Shape4 s = *l.in_shape;
    l.in_shape.reset();
    Tensor<Scalar> gx(s);
    const Index plane = s.h * s.w;
    const Scalar inv = Scalar(1) / static_cast<Scalar>(plane);
    for (Index i = 0; i < s.n * s.c; ++i) gx.data.segment(i * plane, plane) = gy.data[i] * inv;
    return gx;
  }
  Tensor<Scalar> apply_backward(SoftmaxL&, const Tensor<Scalar>& gy,
                                std::map<std::string, Tensor<Scalar>>&) {
    return gy;  // loss supplies the gradient w.r.t. logits
  }
};

// ---------------------------------------------------------------------------
// Architecture builders

struct BuilderOptions {
  /// Scales every channel/unit count (training stays full scale; tests use
  /// this to shrink networks for exhaustive gradient checks).
  double width_scale = 1.0;
  PoolMode pool_mode = PoolMode::max;
  bool nin_dropout = false;
  double nin_keep_probability = 0.5;
};

namespace detail {

inline Index scaled_width(Index base, double scale) {
  return std::max<Index>(1, static_cast<Index>(std::lround(static_cast<double>(base) * scale)));
}

}  // namespace detail

/// LeNet-style classifier. The 32-pixel form is the classic stack
/// conv5(6)-pool-relu / conv5(16)-pool-relu / conv5(120)-relu /
/// dense(84)-relu / dense(classes)-softmax; the 64-pixel form prepends one
/// conv5(6)-pool-relu block (padding 2) that brings the trunk back to the
/// 32-pixel geometry.
template <typename Scalar>
Network<Scalar> build_lenet_classifier(int input_side, Index in_channels, Index num_classes,
                                       const BuilderOptions& opts = {}) {
  if (input_side != 32 && input_side != 64)
    throw ConfigError("lenet: input_side must be 32 or 64, got " + std::to_string(input_side));
  const auto w = [&](Index base) { return detail::scaled_width(base, opts.width_scale); };
  NetworkSpec spec;
  spec.input = {1, in_channels, input_side, input_side};
  spec.output_dim = num_classes;
  auto& L = spec.layers;
  if (input_side == 64) {
    L.push_back(LayerSpec::conv(w(6), 5, 1, 2));
    L.push_back(LayerSpec::pool(opts.pool_mode));
    L.push_back(LayerSpec::relu());
  }
  L.push_back(LayerSpec::conv(w(6), 5));
  L.push_back(LayerSpec::pool(opts.pool_mode));
  L.push_back(LayerSpec::relu());
  L.push_back(LayerSpec::conv(w(16), 5));
  L.push_back(LayerSpec::pool(opts.pool_mode));
  L.push_back(LayerSpec::relu());
  L.push_back(LayerSpec::conv(w(120), 5));
  L.push_back(LayerSpec::relu());
  L.push_back(LayerSpec::flatten());
  L.push_back(LayerSpec::dense(w(84)));
  L.push_back(LayerSpec::relu());
  L.push_back(LayerSpec::dense(num_classes));
  L.push_back(LayerSpec::softmax_head());
  return Network<Scalar>(std::move(spec));
}

/// Network-in-Network classifier: three mlpconv blocks, the first two closed
/// by max pooling (optionally dropout), the last by global average pooling
/// onto num_classes feature maps.
template <typename Scalar>
Network<Scalar> build_nin_classifier(int input_side, Index in_channels, Index num_classes,
                                     const BuilderOptions& opts = {}) {
  if (input_side != 32 && input_side != 64)
    throw ConfigError("nin: input_side must be 32 or 64, got " + std::to_string(input_side));
  const auto w = [&](Index base) { return detail::scaled_width(base, opts.width_scale); };
  NetworkSpec spec;
  spec.input = {1, in_channels, input_side, input_side};
  spec.output_dim = num_classes;
  auto& L = spec.layers;
  L.push_back(LayerSpec::mlpconv(5, w(48), w(48)));
  L.push_back(LayerSpec::pool(opts.pool_mode));
  if (opts.nin_dropout) L.push_back(LayerSpec::dropout(opts.nin_keep_probability));
  L.push_back(LayerSpec::mlpconv(3, w(64), w(64)));
  L.push_back(LayerSpec::pool(opts.pool_mode));
  if (opts.nin_dropout) L.push_back(LayerSpec::dropout(opts.nin_keep_probability));
  L.push_back(LayerSpec::mlpconv(3, w(64), num_classes));
  L.push_back(LayerSpec::global_avg_pool());
  L.push_back(LayerSpec::softmax_head());
  return Network<Scalar>(std::move(spec));
}

/// Facial keypoint regressor on (1, 96, 96) inputs, 30 outputs (15 x/y pairs
/// normalized to [-1, 1]). The modified form follows every existing conv with
/// an extra same-channel 3x3 conv (padding 1) + ReLU and appends one block of
/// two 3x3(256) convs before the dense stack; its pool steps by 1 so the deep
/// stack still tiles.
template <typename Scalar>
Network<Scalar> build_keypoint_net(bool modified, const BuilderOptions& opts = {}) {
  const auto w = [&](Index base) { return detail::scaled_width(base, opts.width_scale); };
  NetworkSpec spec;
  spec.input = {1, 1, 96, 96};
  spec.output_dim = 30;
  auto& L = spec.layers;
  const auto block = [&](Index channels, Index kernel) {
    L.push_back(LayerSpec::conv(w(channels), kernel));
    if (modified) {
      L.push_back(LayerSpec::conv(w(channels), 3, 1, 1));
      L.push_back(LayerSpec::relu());
    }
    L.push_back(LayerSpec::pool(opts.pool_mode));
    L.push_back(LayerSpec::relu());
  };
  block(32, 3);
  block(64, 2);
  block(128, 2);
  if (modified) {
    L.push_back(LayerSpec::conv(w(256), 3, 1, 1));
    L.push_back(LayerSpec::conv(w(256), 3, 1, 1));
    L.push_back(LayerSpec::pool(opts.pool_mode, 2, 1));
    L.push_back(LayerSpec::relu());
  }
  L.push_back(LayerSpec::flatten());
  L.push_back(LayerSpec::dense(w(500)));
  L.push_back(LayerSpec::relu());
  L.push_back(LayerSpec::dense(w(500)));
  L.push_back(LayerSpec::relu());
  L.push_back(LayerSpec::linear_head(30));
  return Network<Scalar>(std::move(spec));
}

}  // namespace lapinet
