#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lapinet/patches.hpp"
#include "lapinet/synth.hpp"
#include "lapinet/train.hpp"
#include "oracles.hpp"

using namespace lapinet;

namespace {

/// Tiny linearly separable 2-class set: class 0 concentrates in the first
/// channel, class 1 in the second.
Dataset<float> toy_classification(Index n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset<float> ds;
  ds.inputs = Tensor<float>({n, 2, 4, 4});
  for (Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.below(2));
    ds.labels.push_back(label);
    for (Index c = 0; c < 2; ++c)
      for (Index p = 0; p < 16; ++p)
        ds.inputs(i, c, p / 4, p % 4) =
            static_cast<float>(rng.uniform(0.0, 0.3) + (label == c ? 0.7 : 0.0));
  }
  return ds;
}

NetworkSpec toy_classifier_spec() {
  NetworkSpec spec;
  spec.input = {1, 2, 4, 4};
  spec.output_dim = 2;
  spec.layers = {LayerSpec::conv(4, 3), LayerSpec::relu(), LayerSpec::flatten(),
                 LayerSpec::dense(2), LayerSpec::softmax_head()};
  return spec;
}

}  // namespace

TEST_CASE("cross entropy worked cases") {
  SUBCASE("perfect one-hot prediction") {
    Tensor<float> probs({1, 3, 1, 1});
    probs.data << 0, 1, 0;
    const auto [loss, grad] = cross_entropy_loss(probs, {1});
    CHECK(loss == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("uniform prediction costs ln K") {
    for (const Index k : {Index{2}, Index{3}, Index{18}}) {
      Tensor<float> probs({1, k, 1, 1});
      probs.data.setConstant(1.0f / static_cast<float>(k));
      const auto [loss, grad] = cross_entropy_loss(probs, {0});
      CHECK(std::abs(loss - std::log(static_cast<double>(k))) < 1e-6);
    }
  }
  SUBCASE("gradient is (p - onehot) / batch") {
    Tensor<float> probs({2, 2, 1, 1});
    probs.data << 0.25f, 0.75f, 0.6f, 0.4f;
    const auto [loss, grad] = cross_entropy_loss(probs, {1, 0});
    CHECK(grad.data[0] == doctest::Approx(0.25 / 2));
    CHECK(grad.data[1] == doctest::Approx(-0.25 / 2));
    CHECK(grad.data[2] == doctest::Approx(-0.4 / 2));
    CHECK(grad.data[3] == doctest::Approx(0.4 / 2));
  }
  SUBCASE("gradient matches finite differences of softmax + CE") {
    // differentiate through logits in double precision
    Rng rng(31);
    auto logits = random_uniform<double>({3, 4, 1, 1}, -2.0, 2.0, rng);
    const std::vector<int> labels = {2, 0, 3};
    const auto loss_of_logits = [&]() {
      return cross_entropy_loss(softmax(logits), labels).first;
    };
    const auto analytic = cross_entropy_loss(softmax(logits), labels).second;
    double worst = 0;
    for (Index i = 0; i < logits.size(); ++i) {
      const double numeric = oracle::central_difference(loss_of_logits, logits.data[i], 1e-3);
      const double a = analytic.data[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8}));
    }
    CHECK(worst < 1e-4);
  }
  SUBCASE("out of range labels") {
    Tensor<float> probs({1, 2, 1, 1});
    probs.data << 0.5f, 0.5f;
    CHECK_THROWS_AS(cross_entropy_loss(probs, {2}), DataError);
    CHECK_THROWS_AS(cross_entropy_loss(probs, {-1}), DataError);
  }
}

TEST_CASE("masked mse worked cases") {
  SUBCASE("prediction equals target") {
    Rng rng(32);
    const auto t = random_uniform<float>({2, 6, 1, 1}, -1.f, 1.f, rng);
    const std::vector<unsigned char> mask(12, 1);
    const auto [loss, grad] = mse_loss(t, t, mask);
    CHECK(loss == 0.0);
    CHECK((grad.data == 0.0f).all());
  }
  SUBCASE("single coordinate arithmetic") {
    Tensor<float> pred({1, 1, 1, 1});
    Tensor<float> target({1, 1, 1, 1});
    target.data[0] = 1.0f;
    const auto [loss, grad] = mse_loss(pred, target, {1});
    CHECK(loss == doctest::Approx(1.0));
    CHECK(grad.data[0] == doctest::Approx(-2.0));
  }
  SUBCASE("half-masked equals brute force over unmasked coordinates") {
    Rng rng(33);
    const auto pred = random_uniform<float>({3, 8, 1, 1}, -1.f, 1.f, rng);
    const auto target = random_uniform<float>({3, 8, 1, 1}, -1.f, 1.f, rng);
    std::vector<unsigned char> mask(24);
    for (auto& m : mask) m = rng.bernoulli(0.5);
    mask[0] = 1;  // keep at least one
    const auto [loss, grad] = mse_loss(pred, target, mask);
    CHECK(loss == doctest::Approx(oracle::masked_mse_reference(pred, target, mask)).epsilon(1e-6));
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (!mask[i]) CHECK(grad.data[static_cast<Index>(i)] == 0.0f);
  }
  SUBCASE("empty mask is a data error") {
    Tensor<float> t({1, 2, 1, 1});
    CHECK_THROWS_AS(mse_loss(t, t, {0, 0}), DataError);
  }
}

TEST_CASE("sgd_step worked cases") {
  SUBCASE("zero gradient and velocity is a bitwise fixed point") {
    Rng rng(34);
    auto p = random_uniform<float>({2, 3, 2, 2}, -1.f, 1.f, rng);
    const auto before = p;
    auto v = zeros<float>(p.shape);
    sgd_step(p, zeros<float>(p.shape), v, 0.1, 0.9);
    CHECK((p.data == before.data).all());
    CHECK((v.data == 0.0f).all());
  }
  SUBCASE("momentum 0 is plain sgd") {
    auto p = full<float>({1, 1, 1, 1}, 1.0f);
    auto v = zeros<float>(p.shape);
    sgd_step(p, full<float>(p.shape, 2.0f), v, 0.25, 0.0);
    CHECK(p.data[0] == doctest::Approx(0.5f));
  }
  SUBCASE("second step with constant gradient scales by 1.9") {
    auto p = zeros<float>({1, 1, 1, 1});
    auto v = zeros<float>(p.shape);
    const auto g = full<float>(p.shape, 1.0f);
    const double lr = 0.1;
    sgd_step(p, g, v, lr, 0.9);
    const float after_first = p.data[0];
    CHECK(after_first == doctest::Approx(-lr));
    sgd_step(p, g, v, lr, 0.9);
    CHECK(p.data[0] - after_first == doctest::Approx(-lr * 1.9));
  }
  SUBCASE("shape mismatch") {
    auto p = zeros<float>({1, 1, 1, 1});
    auto v = zeros<float>(p.shape);
    CHECK_THROWS_AS(sgd_step(p, zeros<float>({1, 2, 1, 1}), v, 0.1, 0.0), ShapeError);
  }
}

TEST_CASE("train honors degenerate and mismatch cases") {
  Network<float> net{toy_classifier_spec()};
  Rng rng(35);
  net.init_params(rng);
  const auto ds = toy_classification(20, 1);

  SUBCASE("zero epochs leaves the weights untouched") {
    const auto before = net.parameters();
    std::vector<Tensor<float>> snapshot;
    for (const auto& [name, t] : before) snapshot.push_back(*t);
    TrainConfig cfg;
    cfg.epochs = 0;
    const auto log = train(net, ds, cfg);
    CHECK(log.entries.empty());
    auto after = net.parameters();
    for (std::size_t i = 0; i < after.size(); ++i)
      CHECK((after[i].second->data == snapshot[i].data).all());
  }
  SUBCASE("head/loss mismatch is a config error") {
    TrainConfig cfg;
    cfg.loss = LossKind::mean_squared_error;
    CHECK_THROWS_AS(train(net, ds, cfg), ConfigError);
  }
  SUBCASE("empty dataset is a data error") {
    TrainConfig cfg;
    Dataset<float> empty;
    empty.inputs = Tensor<float>();
    empty.labels = {0};
    // shape (1,1,1,1) input does not match the spec; catch the earlier error
    CHECK_THROWS(train(net, empty, cfg));
  }
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
  const auto run = [&](std::uint64_t seed) {
    Network<float> net{toy_classifier_spec()};
    Rng init(seed);
    net.init_params(init);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = seed;
    const auto ds = toy_classification(40, 7);
    train(net, ds, cfg);
    std::vector<Tensor<float>> weights;
    for (const auto& [name, t] : net.parameters()) weights.push_back(*t);
    return weights;
  };
  const auto a = run(42);
  const auto b = run(42);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK((a[i].data == b[i].data).all());
  // different seed should differ somewhere
  const auto c = run(43);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) any_diff = any_diff || !(a[i].data == c[i].data).all();
  CHECK(any_diff);
}

TEST_CASE("toy training reaches high validation accuracy") {
  Network<float> net{toy_classifier_spec()};
  Rng init(3);
  net.init_params(init);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.05;
  cfg.seed = 3;
  const auto log = train(net, toy_classification(200, 9), cfg);
  REQUIRE(log.entries.size() == 20);
  CHECK(log.entries.back().val_metric >= 0.95);
}

TEST_CASE("train log exports the csv schema") {
  TrainLog log;
  log.entries.push_back({1, 0.5, 0.75, 1.25});
  const std::string csv = log.to_csv();
  CHECK(csv.rfind("epoch,train_loss,val_metric,seconds\n", 0) == 0);
  CHECK(csv.find("1,0.5,0.75,1.25\n") != std::string::npos);
}

TEST_CASE("grad_check validates a correct net and flags a corrupted one") {
  NetworkSpec spec;
  spec.input = {1, 2, 6, 6};
  spec.output_dim = 2;
  spec.layers = {LayerSpec::conv(3, 3), LayerSpec::relu(), LayerSpec::flatten(),
                 LayerSpec::dense(2), LayerSpec::softmax_head()};
  Network<double> net{spec};
  Rng rng(36);
  net.init_params(rng);
  Dataset<double> batch;
  batch.inputs = random_uniform<double>({2, 2, 6, 6}, -1.0, 1.0, rng);
  batch.labels = {0, 1};

  SUBCASE("tiny conv classifier passes at 1e-4") {
    const auto report = grad_check(net, batch, LossKind::cross_entropy);
    for (const auto& [name, err] : report.worst_by_tensor) {
      INFO(name);
      CHECK(err < 1e-4);
    }
  }
  SUBCASE("linear head with mse is exact to rounding") {
    NetworkSpec lin;
    lin.input = {1, 4, 1, 1};
    lin.output_dim = 3;
    lin.layers = {LayerSpec::linear_head(3)};
    Network<double> linear_net{lin};
    Rng r(37);
    linear_net.init_params(r);
    Dataset<double> b;
    b.inputs = random_uniform<double>({2, 4, 1, 1}, -1.0, 1.0, r);
    b.targets = random_uniform<double>({2, 3, 1, 1}, -1.0, 1.0, r);
    b.target_mask.assign(6, 1);
    const auto report = grad_check(linear_net, b, LossKind::mean_squared_error);
    for (const auto& [name, err] : report.worst_by_tensor) CHECK(err < 1e-6);
  }
  SUBCASE("sign-flip fault injection is detected") {
    GradCheckOptions opts;
    opts.sign_flip_tensor = "conv1.weight";
    const auto report = grad_check(net, batch, LossKind::cross_entropy, opts);
    CHECK(report.worst_by_tensor.at("conv1.weight") > 0.1);
  }
}

TEST_CASE("overfit probe: every builder drives an 8-sample batch down") {
  // classification: loss below 1% of the initial value within 200 epochs
  BuilderOptions small;
  small.width_scale = 0.25;  // the probe exercises the training loop, not capacity
  const auto probe_classifier = [&](auto&& build) {
    auto net = build();
    Rng init(5);
    net.init_params(init);
    net.kernel_policy().threads = 2;
    const Index side = net.spec().input.h;
    Rng rng(6);
    Dataset<float> ds;
    ds.inputs = random_uniform<float>({8, 3, side, side}, 0.f, 1.f, rng);
    for (Index i = 0; i < 8; ++i) ds.labels.push_back(static_cast<int>(i % 2));
    ds.split.assign(8, 0);  // all training
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.05;
    cfg.seed = 11;
    const auto log = train(net, ds, cfg);
    CHECK(log.entries.back().train_loss < 0.01 * log.entries.front().train_loss);
  };
  probe_classifier([&] { return build_lenet_classifier<float>(32, 3, 2, small); });
  probe_classifier([&] { return build_nin_classifier<float>(32, 3, 2, small); });

  // regression: absolute loss below 1e-3
  for (const bool modified : {false, true}) {
    auto net = build_keypoint_net<float>(modified, small);
    Rng init(7);
    net.init_params(init);
    net.kernel_policy().threads = 2;
    const auto faces = gen_keypoint_dataset(21, 8);
    auto ds = make_keypoint_dataset(faces, false);
    ds.split.assign(8, 0);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.15;  // pinned by pilot: full-batch MSE needs a hot step
    cfg.loss = LossKind::mean_squared_error;
    cfg.seed = 13;
    const auto log = train(net, ds, cfg);
    CHECK(log.entries.back().train_loss < 1e-3);
  }
}
