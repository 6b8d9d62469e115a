// lapinet command line: dataset generation, training, evaluation, patch-grid
// segmentation, keypoint prediction and kernel benchmarking, driven by one
// JSON config with flag overrides.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lapinet/bench.hpp"
#include "lapinet/image_io.hpp"
#include "lapinet/metrics.hpp"
#include "lapinet/network.hpp"
#include "lapinet/patches.hpp"
#include "lapinet/serialize.hpp"
#include "lapinet/synth.hpp"
#include "lapinet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lapinet;

namespace {

// ---------------------------------------------------------------------------
// Config document. Unknown keys are rejected everywhere: a typo in an
// experiment record must fail fast, not silently fall back to a default.

struct DatasetSection {
  std::string kind = "burn";
  Index count = 40;
  int classes = 2;
  int patch_size = 32;
  Index patches_per_class = 500;
  bool include_infrared = false;
  bool flip_augment = false;
  double missing_fraction = 0.25;
  double val_fraction = 0.2;
};

struct ModelSection {
  std::string builder = "lenet";
  int input_side = 32;
  Index in_channels = 3;
  Index num_classes = 2;
  bool modified = false;
  bool nin_dropout = false;
  double width_scale = 1.0;
  std::string pool_mode = "max";
};

struct TrainSection {
  TrainConfig cfg;
  std::string loss;  // "", "cross_entropy" or "mse"; empty = pick by builder
  std::string conv_variant = "im2col";
};

struct EvalSection {
  double threshold = 0.1;
  int stride = 32;
  std::string aggregate = "mean";
};

struct BenchSection {
  BenchScenario scenario;
  std::vector<std::string> variants = {"direct", "im2col", "threaded"};
  std::vector<int> threads;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DatasetSection dataset;
  ModelSection model;
  TrainSection train;
  EvalSection eval;
  BenchSection bench;
};

void check_keys(const json& obj, std::initializer_list<const char*> known, const char* where) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok)
      throw ConfigError(std::string("config: unknown key '") + key + "' in section '" + where + "'");
  }
}

template <typename T>
void get_to(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      obj.at(key).get_to(out);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
    }
  }
}

RunConfig parse_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  check_keys(j, {"seed", "dataset", "model", "train", "eval", "bench"}, "root");
  RunConfig cfg;
  get_to(j, "seed", cfg.seed);
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    check_keys(d,
               {"kind", "count", "classes", "patch_size", "patches_per_class", "include_infrared",
                "flip_augment", "missing_fraction", "val_fraction"},
               "dataset");
    get_to(d, "kind", cfg.dataset.kind);
    get_to(d, "count", cfg.dataset.count);
    get_to(d, "classes", cfg.dataset.classes);
    get_to(d, "patch_size", cfg.dataset.patch_size);
    get_to(d, "patches_per_class", cfg.dataset.patches_per_class);
    get_to(d, "include_infrared", cfg.dataset.include_infrared);
    get_to(d, "flip_augment", cfg.dataset.flip_augment);
    get_to(d, "missing_fraction", cfg.dataset.missing_fraction);
    get_to(d, "val_fraction", cfg.dataset.val_fraction);
    if (cfg.dataset.kind != "burn" && cfg.dataset.kind != "keypoint")
      throw ConfigError("config: dataset.kind must be 'burn' or 'keypoint'");
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m,
               {"builder", "input_side", "in_channels", "num_classes", "modified", "nin_dropout",
                "width_scale", "pool_mode"},
               "model");
    get_to(m, "builder", cfg.model.builder);
    get_to(m, "input_side", cfg.model.input_side);
    get_to(m, "in_channels", cfg.model.in_channels);
    get_to(m, "num_classes", cfg.model.num_classes);
    get_to(m, "modified", cfg.model.modified);
    get_to(m, "nin_dropout", cfg.model.nin_dropout);
    get_to(m, "width_scale", cfg.model.width_scale);
    get_to(m, "pool_mode", cfg.model.pool_mode);
    if (cfg.model.builder != "lenet" && cfg.model.builder != "nin" &&
        cfg.model.builder != "keypoint")
      throw ConfigError("config: model.builder must be 'lenet', 'nin' or 'keypoint'");
    if (cfg.model.pool_mode != "max" && cfg.model.pool_mode != "average")
      throw ConfigError("config: model.pool_mode must be 'max' or 'average'");
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t,
               {"learning_rate", "momentum", "batch_size", "epochs", "loss", "shuffle",
                "conv_variant"},
               "train");
    get_to(t, "learning_rate", cfg.train.cfg.learning_rate);
    get_to(t, "momentum", cfg.train.cfg.momentum);
    get_to(t, "batch_size", cfg.train.cfg.batch_size);
    get_to(t, "epochs", cfg.train.cfg.epochs);
    get_to(t, "shuffle", cfg.train.cfg.shuffle);
    get_to(t, "loss", cfg.train.loss);
    get_to(t, "conv_variant", cfg.train.conv_variant);
    if (!cfg.train.loss.empty() && cfg.train.loss != "cross_entropy" && cfg.train.loss != "mse")
      throw ConfigError("config: train.loss must be 'cross_entropy' or 'mse'");
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    check_keys(e, {"threshold", "stride", "aggregate"}, "eval");
    get_to(e, "threshold", cfg.eval.threshold);
    get_to(e, "stride", cfg.eval.stride);
    get_to(e, "aggregate", cfg.eval.aggregate);
    if (cfg.eval.aggregate != "mean" && cfg.eval.aggregate != "max")
      throw ConfigError("config: eval.aggregate must be 'mean' or 'max'");
  }
  if (j.contains("bench")) {
    const json& b = j["bench"];
    check_keys(b,
               {"workload", "batch", "channels", "height", "width", "out_channels", "kernel",
                "stride", "padding", "train_images", "patches_per_class", "num_classes",
                "batch_size", "repetitions", "warmup", "variants", "threads"},
               "bench");
    std::string workload = "conv-forward";
    get_to(b, "workload", workload);
    if (workload == "conv-forward")
      cfg.bench.scenario.workload = BenchWorkload::conv_forward;
    else if (workload == "full-train-epoch")
      cfg.bench.scenario.workload = BenchWorkload::full_train_epoch;
    else
      throw ConfigError("config: bench.workload must be 'conv-forward' or 'full-train-epoch'");
    get_to(b, "batch", cfg.bench.scenario.input.n);
    get_to(b, "channels", cfg.bench.scenario.input.c);
    get_to(b, "height", cfg.bench.scenario.input.h);
    get_to(b, "width", cfg.bench.scenario.input.w);
    get_to(b, "out_channels", cfg.bench.scenario.out_channels);
    get_to(b, "kernel", cfg.bench.scenario.kernel);
    get_to(b, "stride", cfg.bench.scenario.stride);
    get_to(b, "padding", cfg.bench.scenario.padding);
    get_to(b, "train_images", cfg.bench.scenario.train_images);
    get_to(b, "patches_per_class", cfg.bench.scenario.patches_per_class);
    get_to(b, "num_classes", cfg.bench.scenario.num_classes);
    get_to(b, "batch_size", cfg.bench.scenario.batch_size);
    get_to(b, "repetitions", cfg.bench.scenario.repetitions);
    get_to(b, "warmup", cfg.bench.scenario.warmup);
    get_to(b, "variants", cfg.bench.variants);
    get_to(b, "threads", cfg.bench.threads);
  }
  return cfg;
}

// ---------------------------------------------------------------------------

struct GlobalArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool deterministic = false;

  RunConfig load() const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = parse_config(config_path);
    if (seed) cfg.seed = *seed;
    cfg.train.cfg.seed = cfg.seed;
    cfg.bench.scenario.seed = cfg.seed;
    return cfg;
  }

  /// Deterministic mode pins kernels to one thread (fixed summation order).
  int effective_threads() const {
    if (deterministic) return 1;
    if (threads) return std::max(1, *threads);
    return std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  }
};

BuilderOptions builder_options(const ModelSection& m) {
  BuilderOptions opts;
  opts.width_scale = m.width_scale;
  opts.pool_mode = m.pool_mode == "average" ? PoolMode::average : PoolMode::max;
  opts.nin_dropout = m.nin_dropout;
  return opts;
}

Network<float> build_model(const ModelSection& m) {
  const BuilderOptions opts = builder_options(m);
  if (m.builder == "lenet")
    return build_lenet_classifier<float>(m.input_side, m.in_channels, m.num_classes, opts);
  if (m.builder == "nin")
    return build_nin_classifier<float>(m.input_side, m.in_channels, m.num_classes, opts);
  return build_keypoint_net<float>(m.modified, opts);
}

LossKind pick_loss(const RunConfig& cfg) {
  if (!cfg.train.loss.empty())
    return cfg.train.loss == "mse" ? LossKind::mean_squared_error : LossKind::cross_entropy;
  return cfg.model.builder == "keypoint" ? LossKind::mean_squared_error : LossKind::cross_entropy;
}

std::vector<int> split_tags(std::size_t count, double val_fraction, std::uint64_t seed) {
  std::vector<Index> order(count);
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed ^ 0x73706c6974ull);  // independent stream for split assignment
  rng.shuffle(order);
  const std::size_t n_val =
      static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(count)));
  std::vector<int> tags(count, 0);
  for (std::size_t i = 0; i < n_val && i < count; ++i) tags[static_cast<std::size_t>(order[i])] = 1;
  return tags;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen(const GlobalArgs& g, const std::string& kind_flag, std::optional<Index> count_flag,
            const fs::path& out_dir) {
  RunConfig cfg = g.load();
  if (!kind_flag.empty()) cfg.dataset.kind = kind_flag;
  if (count_flag) cfg.dataset.count = *count_flag;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec && !fs::is_directory(out_dir))
    throw IoError("cannot create output directory '" + out_dir.string() + "'");

  Manifest manifest;
  manifest.kind = cfg.dataset.kind;
  manifest.seed = cfg.seed;

  if (cfg.dataset.kind == "burn") {
    const auto images = gen_burn_dataset(cfg.seed, cfg.dataset.count);
    const auto tags = split_tags(images.size(), cfg.dataset.val_fraction, cfg.seed);
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto& img = images[i];
      save_ppm(out_dir / (img.id + ".ppm"), img.width, img.height, img.color);
      save_irf(out_dir / (img.id + ".irf"), img.width, img.height, img.temperature);
      save_mask_pgm(out_dir / (img.id + "_mask.pgm"), img.width, img.height, img.burn_mask);
      manifest.samples.push_back({img.id, img.id + ".ppm", img.id + ".irf", img.id + "_mask.pgm",
                                  "", tags[i] ? "val" : "train"});
    }
  } else {
    KeypointGenConfig kcfg;
    kcfg.missing_fraction = cfg.dataset.missing_fraction;
    const auto samples = gen_keypoint_dataset(cfg.seed, cfg.dataset.count, kcfg);
    const auto tags = split_tags(samples.size(), cfg.dataset.val_fraction, cfg.seed);
    std::vector<KeypointAnnotation> rows;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      save_pgm(out_dir / (s.id + ".pgm"), s.width, s.height, s.image);
      rows.push_back({s.points, s.present, s.id + ".pgm"});
      manifest.samples.push_back({s.id, "", "", "", s.id + ".pgm", tags[i] ? "val" : "train"});
    }
    save_keypoint_csv(out_dir / "keypoints.csv", rows);
    manifest.annotations = "keypoints.csv";
  }
  save_manifest(out_dir / "manifest.json", manifest);
  std::printf("wrote %zu %s samples to %s\n", manifest.samples.size(), manifest.kind.c_str(),
              out_dir.string().c_str());
  return 0;
}

/// Loads the manifest and assembles the training dataset the model expects.
Dataset<float> assemble_dataset(const RunConfig& cfg, const fs::path& data_dir) {
  const fs::path manifest_path = data_dir / "manifest.json";
  const Manifest manifest = load_manifest(manifest_path);
  if (manifest.kind == "burn") {
    const auto images = load_burn_samples(manifest_path, manifest);
    std::vector<int> splits;
    for (const auto& s : manifest.samples) splits.push_back(s.split == "val" ? 1 : 0);
    PatchConfig pcfg;
    pcfg.size = cfg.dataset.patch_size;
    pcfg.include_infrared = cfg.dataset.include_infrared;
    return make_burn_patch_dataset(images, cfg.dataset.classes, cfg.dataset.patches_per_class,
                                   pcfg, cfg.seed, SkinRuleConfig{}, splits);
  }
  const auto samples = load_keypoint_samples(manifest_path, manifest);
  std::vector<int> splits;
  for (const auto& s : manifest.samples) splits.push_back(s.split == "val" ? 1 : 0);
  return make_keypoint_dataset(samples, cfg.dataset.flip_augment, splits);
}

int cmd_train(const GlobalArgs& g, const fs::path& data_dir, const fs::path& out_weights,
              const fs::path& out_log) {
  RunConfig cfg = g.load();
  if (g.config_path.empty()) throw ConfigError("train: --config is required");
  const Dataset<float> dataset = assemble_dataset(cfg, data_dir);

  Network<float> net = build_model(cfg.model);
  Rng init_rng(cfg.seed);
  net.init_params(init_rng);
  net.kernel_policy().conv_variant = cfg.train.conv_variant;
  net.kernel_policy().threads = g.effective_threads();

  TrainConfig tc = cfg.train.cfg;
  tc.loss = pick_loss(cfg);
  const TrainLog log = train(net, dataset, tc);

  save_weights(net, out_weights);
  write_file_atomic(out_log, log.to_csv());
  if (!log.entries.empty()) {
    const auto& last = log.entries.back();
    std::printf("epoch %lld: train_loss %.6f val_metric %.4f\n",
                static_cast<long long>(last.epoch), last.train_loss, last.val_metric);
  }
  std::printf("weights: %s\nlog: %s\n", out_weights.string().c_str(), out_log.string().c_str());
  return 0;
}

Network<float> load_model(const RunConfig& cfg, const fs::path& weights, int threads) {
  Network<float> net = build_model(cfg.model);
  assign_weights(net, load_weights(weights));
  net.kernel_policy().threads = threads;
  net.set_mode(LayerMode::inference);
  return net;
}

int cmd_eval(const GlobalArgs& g, const fs::path& data_dir, const fs::path& weights,
             const fs::path& out_json) {
  RunConfig cfg = g.load();
  if (g.config_path.empty()) throw ConfigError("eval: --config is required");
  Network<float> net = load_model(cfg, weights, g.effective_threads());
  const fs::path manifest_path = data_dir / "manifest.json";
  const Manifest manifest = load_manifest(manifest_path);

  json out;
  if (manifest.kind == "burn") {
    Dataset<float> dataset = assemble_dataset(cfg, data_dir);
    std::vector<Index> val_idx;
    for (Index i = 0; i < dataset.size(); ++i)
      if (!dataset.split.empty() && dataset.split[static_cast<std::size_t>(i)] == 1)
        val_idx.push_back(i);
    if (val_idx.empty()) throw DataError("eval: validation split is empty");
    const Dataset<float> val = dataset.subset(val_idx);
    const Tensor<float> probs = net.forward(val.inputs);
    ConfusionMatrix cm(cfg.model.num_classes);
    const Index k = probs.shape.c;
    for (Index i = 0; i < probs.shape.n; ++i) {
      Index best = 0;
      for (Index j = 1; j < k; ++j)
        if (probs.data[i * k + j] > probs.data[i * k + best]) best = j;
      cm.add(val.labels[static_cast<std::size_t>(i)], static_cast<int>(best));
    }
    out["accuracy"] = accuracy(cm);
    out["samples"] = cm.total();
    json rows = json::array();
    for (Index t = 0; t < cm.k; ++t) {
      json row = json::array();
      for (Index p = 0; p < cm.k; ++p) row.push_back(cm.at(t, p));
      rows.push_back(std::move(row));
    }
    out["confusion_matrix"] = std::move(rows);
    std::printf("accuracy: %.4f over %lld validation patches\n", out["accuracy"].get<double>(),
                static_cast<long long>(cm.total()));
  } else {
    const auto samples = load_keypoint_samples(manifest_path, manifest, "val");
    const auto agg = cfg.eval.aggregate == "max" ? KeypointAggregate::max : KeypointAggregate::mean;
    const KeypointEvalResult res = evaluate_keypoints(net, samples, cfg.eval.threshold, agg);
    out["hit_rate"] = res.hit_rate;
    out["threshold"] = cfg.eval.threshold;
    out["aggregate"] = cfg.eval.aggregate;
    out["per_image_error"] = res.per_image_error;
    std::printf("hit rate at %.3g: %.4f over %zu images\n", cfg.eval.threshold, res.hit_rate,
                res.per_image_error.size());
  }
  write_file_atomic(out_json, out.dump(2) + "\n");
  std::printf("metrics: %s\n", out_json.string().c_str());
  return 0;
}

int cmd_segment(const GlobalArgs& g, const fs::path& weights, const fs::path& image_path,
                const std::string& ir_path) {
  RunConfig cfg = g.load();
  if (g.config_path.empty()) throw ConfigError("segment: --config is required");
  Network<float> net = load_model(cfg, weights, g.effective_threads());

  MultimodalImage img;
  const RgbImage rgb = load_ppm(image_path);
  img.width = rgb.width;
  img.height = rgb.height;
  img.color = rgb.planes;
  img.id = image_path.stem().string();
  if (!ir_path.empty()) {
    const TemperatureMap t = load_irf(ir_path);
    if (t.width != img.width || t.height != img.height)
      throw FormatError("segment: temperature map size differs from the color image");
    img.temperature = t.celsius;
  } else if (net.spec().input.c == 4) {
    throw ConfigError("segment: the model wants an infrared channel; pass --ir");
  } else {
    img.temperature.assign(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height),
                           0.0f);
  }

  const SegmentResult res = segment_image(img, net, cfg.dataset.patch_size, cfg.eval.stride);

  std::vector<std::uint8_t> labels(res.block_labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = res.block_labels[i];
    labels[i] = static_cast<std::uint8_t>(l == kSegmentUnknown ? 0 : l);
  }
  const fs::path label_path = image_path.string() + ".labels.pgm";
  const fs::path overlay_path = image_path.string() + ".overlay.ppm";
  save_mask_pgm(label_path, static_cast<int>(res.grid_w), static_cast<int>(res.grid_h), labels);
  save_ppm(overlay_path, img.width, img.height, res.overlay);
  std::printf("blocks: %lldx%lld\nlabels: %s\noverlay: %s\n", static_cast<long long>(res.grid_w),
              static_cast<long long>(res.grid_h), label_path.string().c_str(),
              overlay_path.string().c_str());
  return 0;
}

int cmd_bench(const GlobalArgs& g, const fs::path& out_csv) {
  RunConfig cfg = g.load();
  std::vector<int> threads = cfg.bench.threads;
  if (threads.empty()) {
    threads = {1};
    const int hw = g.effective_threads();
    if (hw > 1) threads.push_back(hw);
  }
  if (g.deterministic) threads = {1};
  const BenchReport report = run_bench(cfg.bench.scenario, cfg.bench.variants, threads);
  std::fputs(render_table(report).c_str(), stdout);
  if (!out_csv.empty()) {
    write_file_atomic(out_csv, report_to_csv(report));
    std::printf("report: %s\n", out_csv.string().c_str());
  }
  return 0;
}

int cmd_predict(const GlobalArgs& g, const fs::path& weights, const fs::path& image_path,
                const std::string& out_csv) {
  RunConfig cfg = g.load();
  cfg.model.builder = "keypoint";  // prediction is keypoint-specific
  Network<float> net = load_model(cfg, weights, g.effective_threads());
  const GrayImage img = load_pgm(image_path);
  if (img.width != 96 || img.height != 96)
    throw DataError("predict: expected a 96x96 gray image, got " + std::to_string(img.width) + "x" +
                    std::to_string(img.height));
  Tensor<float> x({1, 1, 96, 96});
  for (int p = 0; p < 96 * 96; ++p)
    x.data[p] = static_cast<float>(img.pixels[static_cast<std::size_t>(p)]) / 255.0f;
  const Tensor<float> out = net.forward(x);

  KeypointAnnotation row;
  for (int k = 0; k < 2 * kKeypointCount; ++k)
    row.points[static_cast<std::size_t>(k)] = keypoint_to_pixels(out.data[k]);
  row.present.fill(true);
  row.image = image_path.filename().string();
  std::printf("%s\n", keypoint_csv_header().c_str());
  for (int k = 0; k < kKeypointCount; ++k)
    std::printf("%.2f,%.2f%s", row.points[static_cast<std::size_t>(2 * k)],
                row.points[static_cast<std::size_t>(2 * k + 1)],
                k + 1 == kKeypointCount ? "" : ",");
  std::printf(",%s\n", row.image.c_str());
  if (!out_csv.empty()) save_keypoint_csv(out_csv, {row});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lapinet: patch-based CNN toolkit (burn/skin segmentation, facial keypoints, "
               "kernel benchmarks)"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalArgs g;
  app.add_option("--config", g.config_path, "JSON run configuration");
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed override");
  int threads_value = 0;
  auto* threads_opt = app.add_option("--threads", threads_value, "Kernel thread budget");
  app.add_flag("--deterministic", g.deterministic,
               "Bitwise-reproducible mode: single-threaded kernels");

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset + manifest");
  std::string gen_kind;
  std::optional<Index> gen_count;
  std::string gen_out = "data";
  gen->add_option("--kind", gen_kind, "burn or keypoint")
      ->check(CLI::IsMember({"burn", "keypoint"}));
  Index gen_count_value = 0;
  auto* gen_count_opt = gen->add_option("--count", gen_count_value, "Number of samples");
  gen->add_option("--out", gen_out, "Output directory");

  auto* tr = app.add_subcommand("train", "Train a model on a generated dataset");
  std::string tr_data = "data";
  std::string tr_weights = "weights.lapi";
  std::string tr_log = "train_log.csv";
  tr->add_option("--data", tr_data, "Dataset directory (holds manifest.json)");
  tr->add_option("--out-weights", tr_weights, "Weight file to write");
  tr->add_option("--out-log", tr_log, "Training log CSV to write");

  auto* ev = app.add_subcommand("eval", "Evaluate weights on the validation split");
  std::string ev_data = "data";
  std::string ev_weights;
  std::string ev_out = "metrics.json";
  ev->add_option("--data", ev_data, "Dataset directory");
  ev->add_option("--weights", ev_weights, "Weight file")->required();
  ev->add_option("--out", ev_out, "Metrics JSON to write");

  auto* seg = app.add_subcommand("segment", "Patch-grid segmentation of one image");
  std::string seg_weights;
  std::string seg_image;
  std::string seg_ir;
  seg->add_option("--weights", seg_weights, "Weight file")->required();
  seg->add_option("--image", seg_image, "Color PPM image")->required();
  seg->add_option("--ir", seg_ir, "IRF1 temperature map (for 4-channel models)");

  auto* be = app.add_subcommand("bench", "Time the convolution kernel variants");
  std::string be_out = "bench_report.csv";
  be->add_option("--out", be_out, "Report CSV to write");

  auto* pr = app.add_subcommand("predict", "Predict 15 keypoints for a 96x96 gray image");
  std::string pr_weights;
  std::string pr_image;
  std::string pr_out;
  pr->add_option("--weights", pr_weights, "Weight file")->required();
  pr->add_option("--image", pr_image, "PGM image")->required();
  pr->add_option("--out", pr_out, "Optional CSV to write");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) g.seed = seed_value;
  if (*threads_opt) g.threads = threads_value;
  if (*gen_count_opt) gen_count = gen_count_value;

  try {
    if (gen->parsed()) return cmd_gen(g, gen_kind, gen_count, gen_out);
    if (tr->parsed()) return cmd_train(g, tr_data, tr_weights, tr_log);
    if (ev->parsed()) return cmd_eval(g, ev_data, ev_weights, ev_out);
    if (seg->parsed()) return cmd_segment(g, seg_weights, seg_image, seg_ir);
    if (be->parsed()) return cmd_bench(g, be_out);
    if (pr->parsed()) return cmd_predict(g, pr_weights, pr_image, pr_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const GeometryError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const SizeError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical-correctness failure: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
