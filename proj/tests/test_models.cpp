#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lapinet/network.hpp"
#include "lapinet/serialize.hpp"
#include "lapinet/train.hpp"
#include "oracles.hpp"

using namespace lapinet;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const char* name) {
  return fs::temp_directory_path() / (std::string("lapinet_models_") + name);
}

}  // namespace

TEST_CASE("lenet-32 shapes: 3-channel 2-class") {
  auto net = build_lenet_classifier<float>(32, 3, 2);
  Rng rng(1);
  net.init_params(rng);
  net.set_mode(LayerMode::inference);
  const auto x = random_uniform<float>({4, 3, 32, 32}, 0.f, 1.f, rng);
  const auto y = net.forward(x);
  CHECK(y.shape == Shape4{4, 2, 1, 1});
  for (Index n = 0; n < 4; ++n) {
    double sum = 0;
    for (Index c = 0; c < 2; ++c) sum += y(n, c, 0, 0);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("lenet-32 accepts a 4-channel input for the 3-class problem") {
  auto net = build_lenet_classifier<float>(32, 4, 3);
  Rng rng(2);
  net.init_params(rng);
  net.set_mode(LayerMode::inference);
  const auto y = net.forward(random_uniform<float>({2, 4, 32, 32}, 0.f, 1.f, rng));
  CHECK(y.shape == Shape4{2, 3, 1, 1});
}

TEST_CASE("lenet-64 keeps the same head on a deeper trunk") {
  auto net = build_lenet_classifier<float>(64, 4, 3);
  Rng rng(3);
  net.init_params(rng);
  net.set_mode(LayerMode::inference);
  const auto y = net.forward(random_uniform<float>({2, 4, 64, 64}, 0.f, 1.f, rng));
  CHECK(y.shape == Shape4{2, 3, 1, 1});
  // one extra conv block relative to the 32-pixel form
  const auto params64 = net.parameters();
  auto net32 = build_lenet_classifier<float>(32, 4, 3);
  CHECK(params64.size() == net32.parameters().size() + 2);
}

TEST_CASE("unsupported input side is a config error") {
  CHECK_THROWS_AS(build_lenet_classifier<float>(48, 3, 2), ConfigError);
  CHECK_THROWS_AS(build_nin_classifier<float>(96, 3, 2), ConfigError);
}

TEST_CASE("nin-32 forward reaches (N, 3, 1, 1)") {
  auto net = build_nin_classifier<float>(32, 4, 3);
  Rng rng(4);
  net.init_params(rng);
  net.set_mode(LayerMode::inference);
  const auto y = net.forward(random_uniform<float>({5, 4, 32, 32}, 0.f, 1.f, rng));
  CHECK(y.shape == Shape4{5, 3, 1, 1});
  for (Index n = 0; n < 5; ++n) {
    double sum = 0;
    for (Index c = 0; c < 3; ++c) sum += y(n, c, 0, 0);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("nin-64 with an 18-way head shape-checks") {
  auto net = build_nin_classifier<float>(64, 3, 18);
  Rng rng(5);
  net.init_params(rng);
  net.set_mode(LayerMode::inference);
  const auto y = net.forward(random_uniform<float>({2, 3, 64, 64}, 0.f, 1.f, rng));
  CHECK(y.shape == Shape4{2, 18, 1, 1});
}

TEST_CASE("nin dropout toggle leaves every shape unchanged") {
  BuilderOptions with;
  with.nin_dropout = true;
  auto net_with = build_nin_classifier<float>(32, 4, 3, with);
  auto net_without = build_nin_classifier<float>(32, 4, 3);
  Rng rng(6);
  net_with.init_params(rng);
  net_with.set_mode(LayerMode::inference);
  net_without.init_params(rng);
  net_without.set_mode(LayerMode::inference);
  const auto x = random_uniform<float>({2, 4, 32, 32}, 0.f, 1.f, rng);
  CHECK(net_with.forward(x).shape == net_without.forward(x).shape);
  CHECK(net_with.parameters().size() == net_without.parameters().size());
}

TEST_CASE("keypoint nets chain on 96x96 and output 30 coordinates") {
  Rng rng(7);
  for (const bool modified : {false, true}) {
    auto net = build_keypoint_net<float>(modified);
    net.init_params(rng);
    net.set_mode(LayerMode::inference);
    const auto y = net.forward(random_uniform<float>({2, 1, 96, 96}, 0.f, 1.f, rng));
    CHECK(y.shape == Shape4{2, 30, 1, 1});
  }
}

TEST_CASE("modified keypoint net has strictly more parameters") {
  auto baseline = build_keypoint_net<float>(false);
  auto modified = build_keypoint_net<float>(true);
  CHECK(modified.parameter_count() > baseline.parameter_count());
}

TEST_CASE("zero-weight classifier outputs the uniform distribution") {
  auto net = build_lenet_classifier<float>(32, 3, 2);  // parameters default to zero
  net.set_mode(LayerMode::inference);
  Rng rng(8);
  const auto y = net.forward(random_uniform<float>({3, 3, 32, 32}, 0.f, 1.f, rng));
  for (Index i = 0; i < y.size(); ++i) CHECK(y.data[i] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("forward rejects spec-nonconforming inputs") {
  auto net = build_lenet_classifier<float>(32, 3, 2);
  Rng rng(9);
  CHECK_THROWS_AS(net.forward(random_uniform<float>({1, 3, 64, 64}, 0.f, 1.f, rng)), ShapeError);
  CHECK_THROWS_AS(net.forward(random_uniform<float>({1, 4, 32, 32}, 0.f, 1.f, rng)), ShapeError);
}

TEST_CASE("whole-network gradient check on a tiny custom spec") {
  NetworkSpec spec;
  spec.input = {1, 2, 8, 8};
  spec.output_dim = 3;
  spec.layers = {
      LayerSpec::conv(3, 3), LayerSpec::relu(), LayerSpec::conv(4, 3), LayerSpec::relu(),
      LayerSpec::pool(),     LayerSpec::flatten(), LayerSpec::dense(3), LayerSpec::softmax_head(),
  };
  Network<double> net(std::move(spec));
  Rng rng(10);
  net.init_params(rng);

  Dataset<double> batch;
  batch.inputs = random_uniform<double>({3, 2, 8, 8}, -1.0, 1.0, rng);
  batch.labels = {0, 2, 1};
  const auto report = grad_check(net, batch, LossKind::cross_entropy);
  for (const auto& [name, err] : report.worst_by_tensor) {
    INFO(name, " -> ", err);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("shape chaining holds for every builder at reduced width") {
  // build-time validation implies forward cannot shape-fail afterwards
  BuilderOptions small;
  small.width_scale = 0.25;
  Rng rng(11);
  for (const int side : {32, 64}) {
    auto lenet = build_lenet_classifier<float>(side, 3, 2, small);
    auto nin = build_nin_classifier<float>(side, 3, 2, small);
    lenet.set_mode(LayerMode::inference);
    nin.set_mode(LayerMode::inference);
    const auto x = random_uniform<float>({1, 3, side, side}, 0.f, 1.f, rng);
    CHECK(lenet.forward(x).shape.c == 2);
    CHECK(nin.forward(x).shape.c == 2);
  }
  for (const bool modified : {false, true}) {
    auto kp = build_keypoint_net<float>(modified, small);
    kp.set_mode(LayerMode::inference);
    CHECK(kp.forward(random_uniform<float>({1, 1, 96, 96}, 0.f, 1.f, rng)).shape.c == 30);
  }
}

TEST_CASE("weight serialization round-trips bit-exactly across all builders") {
  Rng rng(12);
  const fs::path path = temp_path("roundtrip.lapi");
  const auto check_roundtrip = [&](auto make_net) {
    auto net = make_net();
    net.init_params(rng);
    save_weights(net, path);
    const auto named = load_weights(path);
    auto fresh = make_net();
    assign_weights(fresh, named);
    const auto a = net.parameters();
    auto b = fresh.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].first == b[i].first);
      CHECK((a[i].second->data == b[i].second->data).all());
    }
  };
  BuilderOptions small;
  small.width_scale = 0.25;
  check_roundtrip([&] { return build_lenet_classifier<float>(32, 3, 2, small); });
  check_roundtrip([&] { return build_lenet_classifier<float>(64, 3, 2, small); });
  check_roundtrip([&] { return build_nin_classifier<float>(32, 3, 2, small); });
  check_roundtrip([&] { return build_keypoint_net<float>(false, small); });
  check_roundtrip([&] { return build_keypoint_net<float>(true, small); });
  fs::remove(path);
}

TEST_CASE("weight file validation") {
  const fs::path path = temp_path("validation.lapi");

  SUBCASE("corrupted magic bytes") {
    BuilderOptions small;
    small.width_scale = 0.25;
    auto net = build_lenet_classifier<float>(32, 3, 2, small);
    save_weights(net, path);
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("NOPE", 4);
    f.close();
    CHECK_THROWS_AS(load_weights(path), FormatError);
  }
  SUBCASE("truncated file") {
    BuilderOptions small;
    small.width_scale = 0.25;
    auto net = build_lenet_classifier<float>(32, 3, 2, small);
    save_weights(net, path);
    const auto size = fs::file_size(path);
    fs::resize_file(path, size / 2);
    CHECK_THROWS_AS(load_weights(path), FormatError);
  }
  SUBCASE("unsupported version") {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write("LAPI", 4);
    const std::uint32_t version = 99, count = 0;
    os.write(reinterpret_cast<const char*>(&version), 4);
    os.write(reinterpret_cast<const char*>(&count), 4);
    os.close();
    CHECK_THROWS_AS(load_weights(path), FormatError);
  }
  SUBCASE("empty tensor list is a valid file") {
    save_named_tensors({}, path);
    CHECK(load_weights(path).empty());
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_weights(temp_path("nope.lapi")), IoError); }
  fs::remove(path);
}

TEST_CASE("backward consumes the forward cache exactly once") {
  auto net = build_lenet_classifier<float>(32, 3, 2, BuilderOptions{.width_scale = 0.25});
  Rng rng(13);
  net.init_params(rng);
  net.set_mode(LayerMode::train);
  const auto x = random_uniform<float>({2, 3, 32, 32}, 0.f, 1.f, rng);
  const auto y = net.forward(x, &rng);
  const auto grad = random_uniform<float>(y.shape, -1.f, 1.f, rng);
  const auto grads = net.backward(grad);
  CHECK(grads.size() == net.parameters().size());
  CHECK_THROWS_AS(net.backward(grad), Error);  // cache already consumed
}
