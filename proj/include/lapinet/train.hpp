#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lapinet/network.hpp"

namespace lapinet {

enum class LossKind { cross_entropy, mean_squared_error };

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  Index batch_size = 32;
  Index epochs = 1;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::cross_entropy;
  bool shuffle = true;

  void validate() const {
    if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0, 1)");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  }
};

struct TrainLogEntry {
  Index epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;

  std::string to_csv() const {
    std::ostringstream os;
    os << "epoch,train_loss,val_metric,seconds\n";
    for (const auto& e : entries) {
      char line[128];
      std::snprintf(line, sizeof(line), "%lld,%.9g,%.9g,%.9g\n", static_cast<long long>(e.epoch),
                    e.train_loss, e.val_metric, e.seconds);
      os << line;
    }
    return os.str();
  }
};

/// Labeled samples for one task. Classification fills `labels`; regression
/// fills `targets` (one (n, D, 1, 1) row per sample) plus a presence mask
/// with one flag per target coordinate. `split` optionally tags each sample
/// 0 = train / 1 = validation; when empty, train() derives a deterministic
/// 80/20 split from its seed.
template <typename Scalar>
struct Dataset {
  Tensor<Scalar> inputs;
  std::vector<int> labels;
  Tensor<Scalar> targets;
  std::vector<unsigned char> target_mask;
  std::vector<int> split;

  bool classification() const { return !labels.empty(); }

  /// Sample count; a default-constructed Dataset is empty.
  Index size() const {
    if (!labels.empty()) return static_cast<Index>(labels.size());
    if (!target_mask.empty()) return targets.shape.n;
    return 0;
  }

  Dataset subset(const std::vector<Index>& idx) const {
    Dataset out;
    if (idx.empty()) return out;
    const Shape4 s = inputs.shape;
    out.inputs = Tensor<Scalar>({static_cast<Index>(idx.size()), s.c, s.h, s.w});
    const Index stride = s.c * s.h * s.w;
    for (std::size_t i = 0; i < idx.size(); ++i)
      out.inputs.data.segment(static_cast<Index>(i) * stride, stride) =
          inputs.data.segment(idx[i] * stride, stride);
    if (classification()) {
      out.labels.reserve(idx.size());
      for (const Index j : idx) out.labels.push_back(labels[static_cast<std::size_t>(j)]);
    } else {
      const Index d = targets.shape.c;
      out.targets = Tensor<Scalar>({static_cast<Index>(idx.size()), d, 1, 1});
      out.target_mask.resize(idx.size() * static_cast<std::size_t>(d));
      for (std::size_t i = 0; i < idx.size(); ++i) {
        out.targets.data.segment(static_cast<Index>(i) * d, d) = targets.data.segment(idx[i] * d, d);
        for (Index k = 0; k < d; ++k)
          out.target_mask[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(k)] =
              target_mask[static_cast<std::size_t>(idx[i] * d + k)];
      }
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Losses

/// Mean negative log probability of the true class. `probs` must already be
/// softmax output; the returned gradient is taken with respect to the logits,
/// (probs - one_hot) / batch, ready to feed Network::backward through the
/// gradient-transparent softmax head.
template <typename Scalar>
std::pair<double, Tensor<Scalar>> cross_entropy_loss(const Tensor<Scalar>& probs,
                                                     const std::vector<int>& labels) {
  const Index n = probs.shape.n;
  const Index k = probs.shape.c;
  if (static_cast<Index>(labels.size()) != n)
    throw ShapeError("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(n));
  Tensor<Scalar> grad(probs.shape);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= k)
      throw DataError("cross_entropy_loss: label " + std::to_string(label) + " out of range [0, " +
                      std::to_string(k) + ")");
    const double p = std::max(static_cast<double>(probs.data[i * k + label]), 1e-12);
    loss -= std::log(p) * inv_n;
    for (Index j = 0; j < k; ++j) {
      const double onehot = (j == label) ? 1.0 : 0.0;
      grad.data[i * k + j] =
          static_cast<Scalar>((static_cast<double>(probs.data[i * k + j]) - onehot) * inv_n);
    }
  }
  return {loss, std::move(grad)};
}

/// Mean squared error over the coordinates whose presence flag is set; masked
/// coordinates contribute zero loss and zero gradient.
template <typename Scalar>
std::pair<double, Tensor<Scalar>> mse_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target,
                                           const std::vector<unsigned char>& presence_mask) {
  if (pred.shape != target.shape)
    throw ShapeError("mse_loss: pred " + pred.shape.str() + " vs target " + target.shape.str());
  if (presence_mask.size() != static_cast<std::size_t>(pred.size()))
    throw ShapeError("mse_loss: mask length does not match coordinates");
  Index count = 0;
  for (const unsigned char m : presence_mask) count += (m != 0);
  if (count == 0) throw DataError("mse_loss: presence mask is empty, no coordinate contributes");
  Tensor<Scalar> grad(pred.shape);
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  for (Index i = 0; i < pred.size(); ++i) {
    if (!presence_mask[static_cast<std::size_t>(i)]) continue;
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    loss += d * d * inv;
    grad.data[i] = static_cast<Scalar>(2.0 * d * inv);
  }
  return {loss, std::move(grad)};
}

// ---------------------------------------------------------------------------
// SGD

/// v <- momentum * v - lr * g;  p <- p + v
template <typename Scalar>
void sgd_step(Tensor<Scalar>& param, const Tensor<Scalar>& grad, Tensor<Scalar>& velocity,
              double learning_rate, double momentum) {
  if (param.shape != grad.shape || param.shape != velocity.shape)
    throw ShapeError("sgd_step: parameter, gradient and velocity shapes must match");
  velocity.data = static_cast<Scalar>(momentum) * velocity.data -
                  static_cast<Scalar>(learning_rate) * grad.data;
  param.data += velocity.data;
}

template <typename Scalar>
void sgd_step(Network<Scalar>& net, const std::map<std::string, Tensor<Scalar>>& grads,
              std::map<std::string, Tensor<Scalar>>& velocity, const TrainConfig& cfg) {
  for (auto& [name, param] : net.parameters()) {
    const auto git = grads.find(name);
    if (git == grads.end()) throw ShapeError("sgd_step: no gradient for parameter '" + name + "'");
    auto vit = velocity.find(name);
    if (vit == velocity.end()) vit = velocity.emplace(name, Tensor<Scalar>(param->shape)).first;
    sgd_step(*param, git->second, vit->second, cfg.learning_rate, cfg.momentum);
  }
}

// ---------------------------------------------------------------------------
// Training loop

namespace detail {

template <typename Scalar>
double default_val_metric(Network<Scalar>& net, const Dataset<Scalar>& val, LossKind loss) {
  const LayerMode saved = net.mode();
  net.set_mode(LayerMode::inference);
  double metric = 0.0;
  if (val.size() > 0) {
    const Tensor<Scalar> out = net.forward(val.inputs);
    if (loss == LossKind::cross_entropy) {
      // validation accuracy
      Index hits = 0;
      const Index k = out.shape.c;
      for (Index i = 0; i < out.shape.n; ++i) {
        Index best = 0;
        for (Index j = 1; j < k; ++j)
          if (out.data[i * k + j] > out.data[i * k + best]) best = j;
        hits += (static_cast<int>(best) == val.labels[static_cast<std::size_t>(i)]);
      }
      metric = static_cast<double>(hits) / static_cast<double>(out.shape.n);
    } else {
      metric = mse_loss(out, val.targets, val.target_mask).first;
    }
  }
  net.set_mode(saved);
  return metric;
}

}  // namespace detail

/// Optional replacement for the per-epoch validation metric (e.g. keypoint
/// hit-rate); receives the net in inference mode and the validation subset.
template <typename Scalar>
using ValMetricFn = std::function<double(Network<Scalar>&, const Dataset<Scalar>&)>;

/// Minibatch SGD. Deterministic for a fixed (seed, dataset, config): the
/// shuffle, dropout masks and 80/20 fallback split all derive from cfg.seed.
template <typename Scalar>
TrainLog train(Network<Scalar>& net, const Dataset<Scalar>& dataset, const TrainConfig& cfg,
               const ValMetricFn<Scalar>& val_metric = {}) {
  cfg.validate();
  if (dataset.size() == 0) throw DataError("train: dataset is empty");
  const bool classification = dataset.classification();
  if (classification && cfg.loss != LossKind::cross_entropy)
    throw ConfigError("train: labeled dataset requires cross_entropy loss");
  if (!classification && cfg.loss != LossKind::mean_squared_error)
    throw ConfigError("train: regression dataset requires mean_squared_error loss");
  if (cfg.loss == LossKind::cross_entropy && net.head_kind() != LayerKind::softmax_head)
    throw ConfigError("train: cross_entropy loss needs a softmax head");
  if (cfg.loss == LossKind::mean_squared_error && net.head_kind() != LayerKind::linear_head)
    throw ConfigError("train: mean_squared_error loss needs a linear head");

  Rng rng(cfg.seed);
  Rng dropout_rng = rng.fork();

  // explicit split tags win; otherwise deterministic 80/20 by seeded shuffle
  std::vector<Index> train_idx, val_idx;
  if (!dataset.split.empty()) {
    for (Index i = 0; i < dataset.size(); ++i)
      (dataset.split[static_cast<std::size_t>(i)] == 0 ? train_idx : val_idx).push_back(i);
  } else {
    std::vector<Index> all(static_cast<std::size_t>(dataset.size()));
    std::iota(all.begin(), all.end(), Index{0});
    rng.shuffle(all);
    const Index n_val = static_cast<Index>(std::lround(0.2 * static_cast<double>(all.size())));
    val_idx.assign(all.begin(), all.begin() + n_val);
    train_idx.assign(all.begin() + n_val, all.end());
  }
  if (train_idx.empty()) throw DataError("train: no training samples after split");
  const Dataset<Scalar> val_set = dataset.subset(val_idx);

  TrainLog log;
  std::map<std::string, Tensor<Scalar>> velocity;
  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.shuffle) rng.shuffle(train_idx);
    net.set_mode(LayerMode::train);
    double loss_sum = 0.0;
    Index seen = 0;
    for (std::size_t pos = 0; pos < train_idx.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(pos + static_cast<std::size_t>(cfg.batch_size), train_idx.size());
      const std::vector<Index> batch_idx(train_idx.begin() + static_cast<std::ptrdiff_t>(pos),
                                         train_idx.begin() + static_cast<std::ptrdiff_t>(end));
      const Dataset<Scalar> batch = dataset.subset(batch_idx);
      const Tensor<Scalar> out = net.forward(batch.inputs, &dropout_rng);
      auto [loss, grad] = classification
                              ? cross_entropy_loss(out, batch.labels)
                              : mse_loss(out, batch.targets, batch.target_mask);
      const auto grads = net.backward(grad);
      sgd_step(net, grads, velocity, cfg);
      loss_sum += loss * static_cast<double>(batch_idx.size());
      seen += static_cast<Index>(batch_idx.size());
    }
    double metric = 0.0;
    if (val_metric) {
      net.set_mode(LayerMode::inference);
      metric = val_metric(net, val_set);
    } else {
      metric = detail::default_val_metric(net, val_set, cfg.loss);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.entries.push_back({epoch, loss_sum / static_cast<double>(seen), metric, secs});
  }
  net.set_mode(LayerMode::inference);
  return log;
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckReport {
  /// Worst relative error |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
  /// per parameter tensor.
  std::map<std::string, double> worst_by_tensor;

  double worst() const {
    double m = 0.0;
    for (const auto& [name, e] : worst_by_tensor) m = std::max(m, e);
    return m;
  }
};

struct GradCheckOptions {
  double step = 1e-3;
  /// Test-only fault injection: the analytic gradient of this tensor is
  /// sign-flipped before comparison, so the check must report a large error.
  std::string sign_flip_tensor;
};

/// Central-difference check of Network::backward against the loss surface.
/// Intended for small nets (~1e4 parameters); runs the net in its current
/// mode (use inference so dropout is the identity). Use Scalar = double:
/// with float storage the finite differences drown in rounding noise.
template <typename Scalar>
GradCheckReport grad_check(Network<Scalar>& net, const Dataset<Scalar>& batch, LossKind loss,
                           const GradCheckOptions& opts = {}) {
  const auto eval_loss = [&]() -> double {
    const LayerMode saved = net.mode();
    net.set_mode(LayerMode::inference);
    const Tensor<Scalar> out = net.forward(batch.inputs);
    const double value = loss == LossKind::cross_entropy
                             ? cross_entropy_loss(out, batch.labels).first
                             : mse_loss(out, batch.targets, batch.target_mask).first;
    net.set_mode(saved);
    return value;
  };

  // analytic pass
  net.set_mode(LayerMode::train);
  const Tensor<Scalar> out = net.forward(batch.inputs);
  auto [loss_value, grad] = loss == LossKind::cross_entropy
                                ? cross_entropy_loss(out, batch.labels)
                                : mse_loss(out, batch.targets, batch.target_mask);
  (void)loss_value;
  auto grads = net.backward(grad);
  net.set_mode(LayerMode::inference);
  if (!opts.sign_flip_tensor.empty()) {
    const auto it = grads.find(opts.sign_flip_tensor);
    if (it == grads.end())
      throw ConfigError("grad_check: unknown tensor '" + opts.sign_flip_tensor + "'");
    it->second.data = -it->second.data;
  }

  GradCheckReport report;
  for (auto& [name, param] : net.parameters()) {
    const Tensor<Scalar>& analytic = grads.at(name);
    double worst = 0.0;
    for (Index i = 0; i < param->size(); ++i) {
      const Scalar saved = param->data[i];
      param->data[i] = saved + static_cast<Scalar>(opts.step);
      const double up = eval_loss();
      param->data[i] = saved - static_cast<Scalar>(opts.step);
      const double down = eval_loss();
      param->data[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = static_cast<double>(analytic.data[i]);
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, err);
    }
    report.worst_by_tensor[name] = worst;
  }
  return report;
}

}  // namespace lapinet
