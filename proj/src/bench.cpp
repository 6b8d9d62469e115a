#include "lapinet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "lapinet/network.hpp"
#include "lapinet/patches.hpp"
#include "lapinet/synth.hpp"
#include "lapinet/train.hpp"

namespace lapinet {

void BenchScenario::validate() const {
  if (repetitions < 3) throw ConfigError("bench: repetitions must be >= 3");
  if (warmup < 1) throw ConfigError("bench: warmup must be >= 1");
}

double quantize9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::strtod(buf, nullptr);
}

std::vector<double> relative_speedups(const std::vector<double>& medians) {
  if (medians.empty()) throw DataError("relative_speedups: no medians");
  const double slowest = *std::max_element(medians.begin(), medians.end());
  std::vector<double> out;
  out.reserve(medians.size());
  for (const double m : medians) out.push_back(quantize9(slowest / m));
  return out;
}

namespace {

double median(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  return n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

std::string read_cpu_model() {
  std::ifstream is("/proc/cpuinfo");
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("model name", 0) == 0) {
      const std::size_t colon = line.find(':');
      if (colon != std::string::npos) {
        std::size_t start = colon + 1;
        while (start < line.size() && line[start] == ' ') ++start;
        return line.substr(start);
      }
    }
  }
  return "unknown";
}

struct Combo {
  std::string variant;
  int threads;
};

/// conv_forward workload: a fixed seeded input, timed per call.
class ConvForwardRunner {
 public:
  explicit ConvForwardRunner(const BenchScenario& sc) {
    Rng rng(sc.seed);
    x_ = random_uniform<float>(sc.input, -1.0f, 1.0f, rng);
    p_.in_channels = sc.input.c;
    p_.out_channels = sc.out_channels;
    p_.kernel_h = p_.kernel_w = sc.kernel;
    p_.stride = sc.stride;
    p_.padding = sc.padding;
    p_.weights = random_uniform<float>({sc.out_channels, sc.input.c, sc.kernel, sc.kernel},
                                       -0.5f, 0.5f, rng);
    p_.bias = random_uniform<float>({1, sc.out_channels, 1, 1}, -0.5f, 0.5f, rng);
  }

  Tensor<float> probe(const Combo& c) const {
    return conv_forward(x_, p_, c.variant, c.threads).first;
  }

  double timed_run(const Combo& c) const {
    const auto t0 = std::chrono::steady_clock::now();
    volatile float sink = conv_forward(x_, p_, c.variant, c.threads).first.data[0];
    (void)sink;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

 private:
  Tensor<float> x_;
  ConvParams<float> p_;
};

/// full_train_epoch workload: one epoch of LeNet-32 on synthetic patches.
/// Every run restarts from the same initial weights.
class TrainEpochRunner {
 public:
  explicit TrainEpochRunner(const BenchScenario& sc) : scenario_(sc) {
    const auto images = gen_burn_dataset(sc.seed, sc.train_images);
    PatchConfig pcfg;
    pcfg.size = 32;
    pcfg.include_infrared = (sc.num_classes == 3);
    dataset_ = make_burn_patch_dataset(images, static_cast<int>(sc.num_classes),
                                       sc.patches_per_class, pcfg, sc.seed);
    dataset_.split.assign(static_cast<std::size_t>(dataset_.size()), 0);  // train on everything
    cfg_.batch_size = sc.batch_size;
    cfg_.epochs = 1;
    cfg_.seed = sc.seed;
    cfg_.loss = LossKind::cross_entropy;
  }

  Network<float> fresh_net(const Combo& c) const {
    Network<float> net = build_lenet_classifier<float>(32, pcfg_channels(), scenario_.num_classes);
    Rng rng(scenario_.seed + 1);
    net.init_params(rng);
    net.kernel_policy().conv_variant = c.variant;
    net.kernel_policy().threads = c.threads;
    return net;
  }

  Tensor<float> probe(const Combo& c) const {
    Network<float> net = fresh_net(c);
    net.set_mode(LayerMode::inference);
    return net.forward(dataset_.inputs);
  }

  double timed_run(const Combo& c) const {
    Network<float> net = fresh_net(c);
    const auto t0 = std::chrono::steady_clock::now();
    train(net, dataset_, cfg_);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

 private:
  Index pcfg_channels() const { return scenario_.num_classes == 3 ? 4 : 3; }

  BenchScenario scenario_;
  Dataset<float> dataset_;
  TrainConfig cfg_;
};

template <typename Runner>
BenchReport run_with(const Runner& runner, const BenchScenario& scenario,
                     const std::vector<Combo>& combos) {
  // correctness pre-flight: every combination must agree before any timing
  const Tensor<float> reference = runner.probe(combos.front());
  for (std::size_t i = 1; i < combos.size(); ++i) {
    const Tensor<float> probe = runner.probe(combos[i]);
    if (probe.shape != reference.shape)
      throw NumericError("bench: variant '" + combos[i].variant + "' output shape mismatch");
    const float diff = (probe.data - reference.data).abs().maxCoeff();
    if (!(diff <= 1e-5f))
      throw NumericError("bench: variant '" + combos[i].variant + "' (threads " +
                         std::to_string(combos[i].threads) + ") diverges from '" +
                         combos.front().variant + "' by " + std::to_string(diff) +
                         " (tolerance 1e-5); no timings emitted");
  }

  BenchReport report;
  report.cpu_model = read_cpu_model();
  report.hardware_threads = static_cast<int>(std::thread::hardware_concurrency());
  std::vector<double> medians;
  for (const Combo& c : combos) {
    for (int i = 0; i < scenario.warmup; ++i) runner.timed_run(c);
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(scenario.repetitions));
    for (int i = 0; i < scenario.repetitions; ++i) times.push_back(runner.timed_run(c));
    medians.push_back(quantize9(median(std::move(times))));
  }
  const std::vector<double> speedups = relative_speedups(medians);
  for (std::size_t i = 0; i < combos.size(); ++i)
    report.rows.push_back({combos[i].variant, combos[i].threads, medians[i], speedups[i]});
  std::sort(report.rows.begin(), report.rows.end(),
            [](const BenchRow& a, const BenchRow& b) { return a.speedup < b.speedup; });

  // soft expectation: the matrix reformulation should not lose to the direct
  // loop at batch >= 16; flag it, hardware varies
  if (scenario.input.n >= 16) {
    double best_direct = -1.0, best_im2col = -1.0;
    for (const auto& row : report.rows) {
      if (row.variant == "direct") best_direct = best_direct < 0 ? row.median_seconds
                                                                 : std::min(best_direct, row.median_seconds);
      if (row.variant == "im2col") best_im2col = best_im2col < 0 ? row.median_seconds
                                                                 : std::min(best_im2col, row.median_seconds);
    }
    if (best_direct > 0 && best_im2col > best_direct)
      report.warnings.push_back(
          "im2col variant measured slower than the direct loop at batch >= 16");
  }
  return report;
}

}  // namespace

BenchReport run_bench(const BenchScenario& scenario, const std::vector<std::string>& variants,
                      const std::vector<int>& thread_counts) {
  scenario.validate();
  if (variants.empty()) throw ConfigError("bench: no variants given");
  const auto& registry = conv_kernel_registry<float>();
  for (const auto& v : variants)
    if (registry.find(v) == registry.end())
      throw ConfigError("bench: unknown kernel variant '" + v + "'");
  std::vector<int> threads = thread_counts;
  if (threads.empty()) threads = {1};

  std::vector<Combo> combos;
  for (const auto& v : variants)
    for (const int t : threads) {
      if (t < 1) throw ConfigError("bench: thread counts must be >= 1");
      combos.push_back({v, t});
    }

  if (scenario.workload == BenchWorkload::conv_forward)
    return run_with(ConvForwardRunner(scenario), scenario, combos);
  return run_with(TrainEpochRunner(scenario), scenario, combos);
}

std::string render_table(const BenchReport& report) {
  std::ostringstream os;
  os << "variant      threads   median [s]      speedup\n";
  char line[128];
  for (const auto& row : report.rows) {
    std::snprintf(line, sizeof(line), "%-12s %7d   %12.9f   %8.3f\n", row.variant.c_str(),
                  row.threads, row.median_seconds, row.speedup);
    os << line;
  }
  os << "cpu: " << report.cpu_model << " (" << report.hardware_threads << " hardware threads)\n";
  for (const auto& w : report.warnings) os << "warning: " << w << "\n";
  return os.str();
}

std::string report_to_csv(const BenchReport& report) {
  std::ostringstream os;
  os << "variant,threads,median_seconds,speedup\n";
  char line[128];
  for (const auto& row : report.rows) {
    std::snprintf(line, sizeof(line), "%s,%d,%.9g,%.9g\n", row.variant.c_str(), row.threads,
                  row.median_seconds, row.speedup);
    os << line;
  }
  return os.str();
}

BenchReport report_from_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line != "variant,threads,median_seconds,speedup")
    throw FormatError("bench CSV: unexpected header");
  BenchReport report;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    BenchRow row;
    std::size_t start = 0;
    std::vector<std::string> cells;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        cells.push_back(line.substr(start));
        break;
      }
      cells.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (cells.size() != 4) throw FormatError("bench CSV: expected 4 columns");
    row.variant = cells[0];
    try {
      row.threads = std::stoi(cells[1]);
      row.median_seconds = std::stod(cells[2]);
      row.speedup = std::stod(cells[3]);
    } catch (const std::exception&) {
      throw FormatError("bench CSV: malformed number in row '" + line + "'");
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace lapinet
