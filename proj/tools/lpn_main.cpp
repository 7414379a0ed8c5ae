// SPDX-License-Identifier: Apache-2.0
//
// lpn — train, evaluate and inspect the chest X-ray pneumonia classifier.
//
// Exit codes: 0 ok, 2 config error, 3 dataset error, 4 checkpoint error,
// 5 no successful prediction, 6 gradient check failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lpn/checkpoint.hpp"
#include "lpn/config.hpp"
#include "lpn/eval.hpp"
#include "lpn/gradcheck.hpp"
#include "lpn/model.hpp"
#include "lpn/parallel.hpp"
#include "lpn/train.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDataset = 3;
constexpr int kExitCheckpoint = 4;
constexpr int kExitNoPrediction = 5;
constexpr int kExitGradCheck = 6;

std::string with_commas(long long v) {
  std::string s = std::to_string(v);
  for (int pos = static_cast<int>(s.size()) - 3; pos > 0; pos -= 3)
    s.insert(static_cast<size_t>(pos), ",");
  return s;
}

std::string shape_str(const lpn::Shape& s) {
  std::string out;
  for (int i = 0; i < s.rank(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

int cmd_inspect() {
  const lpn::ModelSpec spec = lpn::build_lightpneumonet();
  const auto trace = lpn::shape_trace(spec);
  const auto counts = lpn::count_params(spec);

  std::printf("%-10s %-14s %12s\n", "Layer", "Output shape", "Params");
  std::printf("%-10s %-14s %12s\n", "input",
              shape_str(lpn::Shape{spec.input_h, spec.input_w, spec.input_c}).c_str(), "0");
  for (const auto& row : trace)
    std::printf("%-10s %-14s %12s\n", row.name.c_str(), shape_str(row.out_shape).c_str(),
                with_commas(row.param_count).c_str());

  const double mib = static_cast<double>(counts.bytes()) / (1024.0 * 1024.0);
  std::printf("\nTrainable params: %s (%.2f MiB)\n", with_commas(counts.total).c_str(), mib);
  std::printf("Parameter memory: %s bytes (4 bytes per parameter)\n",
              with_commas(counts.bytes()).c_str());
  return 0;
}

int cmd_gradcheck(uint64_t seed, double tolerance) {
  const lpn::ModelSpec spec = lpn::build_reduced_spec();
  std::printf("gradient check: reduced stack %lldx%lld, seed %llu, tolerance %g\n",
              static_cast<long long>(spec.input_h), static_cast<long long>(spec.input_w),
              static_cast<unsigned long long>(seed), tolerance);
  const lpn::GradCheckReport report = lpn::gradient_check(spec, seed, tolerance);
  for (const auto& g : report.groups)
    std::printf("%-10s rel_err %.3e  %s\n", g.layer.c_str(), g.rel_err, g.pass ? "ok" : "FAIL");
  std::printf("result: %s (max rel err %.3e)\n", report.pass ? "PASS" : "FAIL", report.max_rel_err);
  return report.pass ? 0 : kExitGradCheck;
}

lpn::RunConfig load_config(const std::string& path) {
  return path.empty() ? lpn::RunConfig{} : lpn::RunConfig::from_json_file(path);
}

int cmd_train(const std::string& config_path, int threads_flag, bool dump_config) {
  lpn::RunConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const lpn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (dump_config) {
    std::cout << cfg.to_json_text();
    return 0;
  }

  const int threads = lpn::default_threads(threads_flag);
  lpn::DatasetManifest manifest;
  try {
    manifest = lpn::load_manifest(cfg.dataset_root, lpn::Split::train);
  } catch (const lpn::DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return kExitDataset;
  }
  std::printf("training on %zu images (%lld NORMAL / %lld PNEUMONIA), threads=%d\n",
              manifest.records.size(), static_cast<long long>(manifest.class_counts[0]),
              static_cast<long long>(manifest.class_counts[1]), threads);

  const lpn::ModelSpec spec = lpn::build_lightpneumonet();
  lpn::ModelParams<float> params = lpn::init_params<float>(spec, cfg.seed);
  cfg.train.seed = cfg.seed;

  lpn::TrainResult result =
      lpn::train(spec, std::move(params), manifest, cfg.train, cfg.augment, cfg.optimizer,
                 cfg.preprocess, cfg.out_dir, threads, [&](const lpn::EpochStats& e) {
                   std::printf("epoch %3d/%d  loss %.6f  acc %.4f  %.1fs\n", e.epoch,
                               cfg.train.max_epochs, e.loss, e.accuracy, e.seconds);
                   std::fflush(stdout);
                 });

  lpn::save_weights(result.params, (fs::path(cfg.out_dir) / "final.lpnw").string());
  lpn::write_history_csv(result.history, (fs::path(cfg.out_dir) / "history.csv").string());
  std::printf("%s after %zu epochs; best loss %.6f\n",
              result.stopped_early ? "stopped early" : "finished", result.history.size(),
              result.best_loss);
  std::printf("wrote %s, %s\n", result.best_checkpoint_path.c_str(),
              (fs::path(cfg.out_dir) / "final.lpnw").string().c_str());
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& checkpoint,
                 const std::string& split_name, int threads_flag) {
  lpn::RunConfig cfg;
  lpn::Split split;
  try {
    cfg = load_config(config_path);
    if (split_name == "train")
      split = lpn::Split::train;
    else if (split_name == "test")
      split = lpn::Split::test;
    else if (split_name == "val")
      split = lpn::Split::val;
    else
      throw lpn::ConfigError("unknown split: " + split_name);
  } catch (const lpn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  const lpn::ModelSpec spec = lpn::build_lightpneumonet();
  lpn::ModelParams<float> params;
  try {
    params = lpn::load_weights(checkpoint, spec);
  } catch (const std::exception& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  }

  lpn::DatasetManifest manifest;
  try {
    manifest = lpn::load_manifest(cfg.dataset_root, split);
  } catch (const lpn::DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return kExitDataset;
  }

  const lpn::EvalResult result =
      lpn::evaluate(params, spec, manifest, cfg.preprocess, lpn::default_threads(threads_flag));

  fs::create_directories(cfg.out_dir);
  lpn::write_metrics_json(result.metrics, (fs::path(cfg.out_dir) / "metrics.json").string());
  lpn::write_confusion_csv(result.confusion, (fs::path(cfg.out_dir) / "confusion.csv").string());
  {
    std::ofstream pf((fs::path(cfg.out_dir) / "predictions.jsonl").string(), std::ios::trunc);
    for (const auto& p : result.predictions) {
      if (!p.ok) continue;
      nlohmann::ordered_json line = {{"path", p.path},
                                     {"label", p.label == 1 ? "PNEUMONIA" : "NORMAL"},
                                     {"predicted", p.predicted == 1 ? "PNEUMONIA" : "NORMAL"},
                                     {"probability", p.probs[static_cast<size_t>(p.predicted)]}};
      pf << line.dump() << "\n";
    }
  }

  for (const auto& p : result.predictions)
    if (!p.ok) std::cerr << "warning: skipped " << p.path << ": " << p.error << "\n";

  std::printf("split=%s n=%lld  tp=%lld fp=%lld fn=%lld tn=%lld\n", split_name.c_str(),
              result.confusion.total(), result.confusion.tp, result.confusion.fp,
              result.confusion.fn, result.confusion.tn);
  std::printf("accuracy %.4f  precision %.4f  recall %.4f  f1 %.4f\n", result.metrics.accuracy,
              result.metrics.precision, result.metrics.recall, result.metrics.f1);
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::vector<std::string>& paths, bool both) {
  const lpn::ModelSpec spec = lpn::build_lightpneumonet();
  lpn::ModelParams<float> params;
  try {
    params = lpn::load_weights(checkpoint, spec);
  } catch (const std::exception& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  }

  const lpn::PreprocessConfig preprocess;
  int ok = 0;
  for (const std::string& path : paths) {
    try {
      lpn::Tensor<float> raw = lpn::decode_image(path);
      lpn::Tensor<float> img = lpn::preprocess_image(raw, preprocess, nullptr);
      lpn::Tensor<float> batch =
          lpn::reshape(img, lpn::Shape{1, preprocess.target_h, preprocess.target_w, 1});
      const auto fwd = lpn::model_forward(params, spec, batch, lpn::RunMode::infer,
                                          lpn::RngStream(0), /*cached=*/false);
      const double p0 = fwd.probs.at(0, 0), p1 = fwd.probs.at(0, 1);
      const int predicted = p1 > p0 ? 1 : 0;
      nlohmann::ordered_json line = {{"path", path},
                                     {"label", predicted == 1 ? "PNEUMONIA" : "NORMAL"},
                                     {"probability", predicted == 1 ? p1 : p0}};
      if (both) line["probabilities"] = {p0, p1};
      std::cout << line.dump() << "\n";
      ++ok;
    } catch (const lpn::DecodeError& e) {
      std::cerr << "warning: " << e.what() << "\n";
    }
  }
  return ok > 0 ? 0 : kExitNoPrediction;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lpn — lightweight chest X-ray pneumonia classifier"};
  app.require_subcommand(1);

  auto* inspect = app.add_subcommand("inspect", "print the layer table and parameter counts");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the backward pass");
  uint64_t gc_seed = 7;
  double gc_tolerance = 1e-5;
  gradcheck->add_option("--seed", gc_seed, "rng seed");
  gradcheck->add_option("--tolerance", gc_tolerance, "max relative error per parameter group");

  auto* train = app.add_subcommand("train", "train on <dataset_root>/train");
  std::string train_config;
  int train_threads = 0;
  bool dump_config = false;
  train->add_option("-c,--config", train_config, "JSON config file");
  train->add_option("--threads", train_threads, "worker threads (default: LPN_THREADS or hardware)");
  train->add_flag("--dump-config", dump_config, "print the effective config and exit");

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset split");
  std::string eval_config, eval_checkpoint, eval_split = "test";
  int eval_threads = 0;
  evaluate->add_option("-c,--config", eval_config, "JSON config file");
  evaluate->add_option("-m,--model", eval_checkpoint, "LPNW checkpoint")->required();
  evaluate->add_option("--split", eval_split, "train | test | val");
  evaluate->add_option("--threads", eval_threads, "worker threads");

  auto* predict = app.add_subcommand("predict", "classify images, one JSON line each");
  std::string predict_checkpoint;
  std::vector<std::string> predict_paths;
  bool predict_both = false;
  predict->add_option("-m,--model", predict_checkpoint, "LPNW checkpoint")->required();
  predict->add_flag("--both", predict_both, "also print both class probabilities");
  predict->add_option("images", predict_paths, "image files")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (inspect->parsed()) return cmd_inspect();
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_tolerance);
    if (train->parsed()) return cmd_train(train_config, train_threads, dump_config);
    if (evaluate->parsed()) return cmd_evaluate(eval_config, eval_checkpoint, eval_split, eval_threads);
    if (predict->parsed()) return cmd_predict(predict_checkpoint, predict_paths, predict_both);
  } catch (const lpn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const lpn::DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return kExitDataset;
  } catch (const lpn::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
