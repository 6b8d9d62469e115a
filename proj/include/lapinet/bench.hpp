#pragma once

#include <string>
#include <vector>

#include "lapinet/conv.hpp"
#include "lapinet/tensor.hpp"

namespace lapinet {

enum class BenchWorkload { conv_forward, full_train_epoch };

/// One measured scenario. conv_forward times a single convolution;
/// full_train_epoch times one epoch of a small LeNet-32 classifier on a
/// synthetic patch set (kept small so training runs stay short).
struct BenchScenario {
  BenchWorkload workload = BenchWorkload::conv_forward;
  Shape4 input{16, 3, 32, 32};

  // conv_forward geometry
  Index out_channels = 16;
  Index kernel = 3;
  Index stride = 1;
  Index padding = 1;

  // full_train_epoch workload
  Index train_images = 8;          // synthetic source images
  Index patches_per_class = 64;
  Index num_classes = 2;
  Index batch_size = 32;

  int repetitions = 5;  // >= 3
  int warmup = 1;       // >= 1
  std::uint64_t seed = 0;

  void validate() const;
};

struct BenchRow {
  std::string variant;
  int threads = 1;
  double median_seconds = 0.0;
  double speedup = 0.0;  // slowest median / this median; the slowest row is 1.0
};

struct BenchReport {
  std::vector<BenchRow> rows;  // ascending by speedup
  std::string cpu_model;
  int hardware_threads = 0;
  std::vector<std::string> warnings;
};

/// Relative speedups normalized to the slowest entry (which scores exactly
/// 1.0). All numbers are quantized to 9 significant digits so the CSV
/// round-trips losslessly.
std::vector<double> relative_speedups(const std::vector<double>& medians);

/// Rounds through the 9-significant-digit decimal representation used by the
/// CSV, so stored values and serialized values are identical.
double quantize9(double v);

/// Times every (variant, threads) combination of the scenario. Before any
/// timing, all combinations must produce outputs equal within 1e-5 absolute
/// on the scenario's seeded input; a mismatch aborts with NumericError and no
/// timings are emitted.
BenchReport run_bench(const BenchScenario& scenario, const std::vector<std::string>& variants,
                      const std::vector<int>& thread_counts);

/// Aligned text table (plus any warnings), rows ascending by speedup.
std::string render_table(const BenchReport& report);

/// CSV: variant,threads,median_seconds,speedup with 9 significant digits.
std::string report_to_csv(const BenchReport& report);
BenchReport report_from_csv(const std::string& csv);

}  // namespace lapinet
