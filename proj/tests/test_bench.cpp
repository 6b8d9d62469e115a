#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lapinet/bench.hpp"

using namespace lapinet;

TEST_CASE("speedup normalization") {
  SUBCASE("single variant scores exactly 1.0") {
    const auto s = relative_speedups({0.123456789});
    REQUIRE(s.size() == 1);
    CHECK(s[0] == 1.0);
  }
  SUBCASE("fixed times [10, 5, 2] score [1, 2, 5]") {
    const auto s = relative_speedups({10.0, 5.0, 2.0});
    CHECK(s[0] == 1.0);
    CHECK(s[1] == 2.0);
    CHECK(s[2] == 5.0);
  }
  SUBCASE("a 26% faster variant scores 1.26") {
    const auto s = relative_speedups({1.26, 1.0});
    CHECK(s[0] == 1.0);
    CHECK(s[1] == doctest::Approx(1.26).epsilon(1e-9));
  }
  SUBCASE("every speedup is at least 1.0") {
    const auto s = relative_speedups({0.5, 3.0, 0.7, 1.1});
    for (const double v : s) CHECK(v >= 1.0);
  }
}

TEST_CASE("scenario validation") {
  BenchScenario sc;
  sc.repetitions = 2;
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc.repetitions = 3;
  sc.warmup = 0;
  CHECK_THROWS_AS(sc.validate(), ConfigError);
}

TEST_CASE("unknown variant is rejected before any timing") {
  BenchScenario sc;
  sc.input = {2, 2, 8, 8};
  sc.repetitions = 3;
  CHECK_THROWS_AS(run_bench(sc, {"direct", "nope"}, {1}), ConfigError);
}

TEST_CASE("small conv bench runs end to end") {
  BenchScenario sc;
  sc.input = {4, 3, 16, 16};
  sc.out_channels = 8;
  sc.repetitions = 3;
  sc.warmup = 1;
  const BenchReport report = run_bench(sc, {"direct", "im2col", "threaded"}, {1, 2});
  CHECK(report.rows.size() == 6);
  // ascending speedups, slowest first at exactly 1.0
  CHECK(report.rows.front().speedup == 1.0);
  for (std::size_t i = 1; i < report.rows.size(); ++i)
    CHECK(report.rows[i].speedup >= report.rows[i - 1].speedup);
  for (const auto& row : report.rows) CHECK(row.median_seconds > 0.0);
  CHECK_FALSE(report.cpu_model.empty());
}

TEST_CASE("a corrupted variant blocks the timing report") {
  // test-only kernel: direct loop plus a deliberate 1e-3 offset
  register_conv_kernel<float>(
      "corrupted-test-kernel",
      [](const Tensor<float>& xp, const ConvParams<float>& p, const ConvGeometry& g,
         Shape4 out_shape, int threads) {
        auto& registry = conv_kernel_registry<float>();
        Tensor<float> out = registry.at("direct")(xp, p, g, out_shape, threads);
        out.data += 1e-3f;
        return out;
      });
  BenchScenario sc;
  sc.input = {2, 2, 8, 8};
  sc.out_channels = 4;
  sc.repetitions = 3;
  CHECK_THROWS_AS(run_bench(sc, {"direct", "corrupted-test-kernel"}, {1}), NumericError);
  conv_kernel_registry<float>().erase("corrupted-test-kernel");
}

TEST_CASE("csv round trip is lossless") {
  BenchScenario sc;
  sc.input = {4, 2, 12, 12};
  sc.out_channels = 4;
  sc.repetitions = 3;
  const BenchReport report = run_bench(sc, {"direct", "im2col"}, {1});
  const std::string csv = report_to_csv(report);
  const BenchReport back = report_from_csv(csv);
  REQUIRE(back.rows.size() == report.rows.size());
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    CHECK(back.rows[i].variant == report.rows[i].variant);
    CHECK(back.rows[i].threads == report.rows[i].threads);
    // exact: report numbers are quantized to their 9-digit serialization
    CHECK(back.rows[i].median_seconds == report.rows[i].median_seconds);
    CHECK(back.rows[i].speedup == report.rows[i].speedup);
  }
  CHECK(report_to_csv(back) == csv);

  CHECK_THROWS_AS(report_from_csv("wrong,header\n"), FormatError);
}

TEST_CASE("render_table lists every row") {
  BenchReport report;
  report.rows = {{"direct", 1, 0.5, 1.0}, {"im2col", 1, 0.1, 5.0}};
  report.cpu_model = "test-cpu";
  const std::string table = render_table(report);
  CHECK(table.find("direct") != std::string::npos);
  CHECK(table.find("im2col") != std::string::npos);
  CHECK(table.find("test-cpu") != std::string::npos);
}
