// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "lpn/eval.hpp"
#include "lpn/train.hpp"
#include "testutil.hpp"

using namespace lpn;

// --- early stopping -----------------------------------------------------------

TEST_CASE("early stopping: plateau after an improvement stops at patience") {
  const std::vector<double> losses = {1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9};
  EarlyStopState state;
  int stopped_at = -1;
  for (size_t i = 0; i < losses.size(); ++i) {
    EarlyStopDecision d = early_stop_update(state, losses[i], 5);
    state = d.state;
    if (d.stop) {
      stopped_at = static_cast<int>(i) + 1;
      break;
    }
  }
  CHECK(stopped_at == 7);
  CHECK(state.best_loss == 0.9);
}

TEST_CASE("early stopping: strict decrease never stops") {
  EarlyStopState state;
  double loss = 1.0;
  for (int epoch = 0; epoch < 100; ++epoch) {
    loss *= 0.999;
    EarlyStopDecision d = early_stop_update(state, loss, 5);
    state = d.state;
    CHECK_FALSE(d.stop);
  }
}

TEST_CASE("early stopping: a later improvement resets the counter") {
  EarlyStopState state;
  EarlyStopDecision d = early_stop_update(state, 1.0, 5);
  CHECK(d.improved);
  d = early_stop_update(d.state, 1.1, 5);
  CHECK_FALSE(d.improved);
  CHECK(d.state.epochs_since_improvement == 1);
  d = early_stop_update(d.state, 0.8, 5);
  CHECK(d.improved);
  CHECK(d.state.epochs_since_improvement == 0);
  CHECK(d.state.best_loss == 0.8);
}

TEST_CASE("early stopping: NaN loss is a numeric error") {
  EarlyStopState state;
  CHECK_THROWS_AS(early_stop_update(state, std::nan(""), 5), NumericError);
}

// --- confusion and metrics ------------------------------------------------------

TEST_CASE("the reference metric quadruple pins a unique confusion matrix") {
  // exhaustive oracle over all confusion matrices with 624 samples
  const auto found = testutil::search_confusion(624, 9423, 9194, 9949, 9557);
  REQUIRE(found.size() == 1);
  CHECK(found[0].tp == 388);
  CHECK(found[0].fp == 34);
  CHECK(found[0].fn == 2);
  CHECK(found[0].tn == 200);

  const MetricsReport m = metrics_from_confusion({388, 34, 2, 200});
  CHECK(std::llround(m.accuracy * 10000) == 9423);
  CHECK(std::llround(m.precision * 10000) == 9194);
  CHECK(std::llround(m.recall * 10000) == 9949);
  CHECK(std::llround(m.f1 * 10000) == 9557);
}

TEST_CASE("metrics: zero-division flags and the perfect classifier") {
  const MetricsReport no_pos = metrics_from_confusion({0, 0, 0, 10});
  CHECK(no_pos.recall == 0.0);
  CHECK(no_pos.recall_zero_division);
  CHECK(no_pos.precision_zero_division);
  CHECK(no_pos.f1_zero_division);
  CHECK(no_pos.accuracy == 1.0);

  const MetricsReport perfect = metrics_from_confusion({390, 0, 0, 234});
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  CHECK_THROWS_AS(metrics_from_confusion({0, 0, 0, 0}), InputError);
}

TEST_CASE("metrics are invariant under scaling all counts") {
  const ConfusionMatrix cm{37, 11, 5, 47};
  const MetricsReport base = metrics_from_confusion(cm);
  for (long long k : {2LL, 5LL, 100LL}) {
    const MetricsReport scaled = metrics_from_confusion({cm.tp * k, cm.fp * k, cm.fn * k, cm.tn * k});
    CHECK(scaled.accuracy == doctest::Approx(base.accuracy).epsilon(1e-12));
    CHECK(scaled.precision == doctest::Approx(base.precision).epsilon(1e-12));
    CHECK(scaled.recall == doctest::Approx(base.recall).epsilon(1e-12));
    CHECK(scaled.f1 == doctest::Approx(base.f1).epsilon(1e-12));
  }
}

TEST_CASE("f1 equals the harmonic mean identity whenever P+R > 0") {
  RngStream rng(83);
  for (int trial = 0; trial < 50; ++trial) {
    const ConfusionMatrix cm{static_cast<long long>(rng.below(100)),
                             static_cast<long long>(rng.below(100)),
                             static_cast<long long>(rng.below(100)),
                             static_cast<long long>(rng.below(100))};
    if (cm.total() == 0) continue;
    const MetricsReport m = metrics_from_confusion(cm);
    CHECK(m.accuracy ==
          doctest::Approx(static_cast<double>(cm.tp + cm.tn) / cm.total()).epsilon(1e-12));
    if (m.precision + m.recall > 0)
      CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall))
                        .epsilon(1e-12));
  }
}

TEST_CASE("prediction counting: labels [1,1,0] vs predictions [1,0,0]") {
  std::vector<PredictionRecord> preds(3);
  const int labels[3] = {1, 1, 0}, predicted[3] = {1, 0, 0};
  for (int i = 0; i < 3; ++i) {
    preds[static_cast<size_t>(i)].ok = true;
    preds[static_cast<size_t>(i)].label = labels[i];
    preds[static_cast<size_t>(i)].predicted = predicted[i];
  }
  const ConfusionMatrix cm = confusion_from_predictions(preds);
  CHECK(cm.tp == 1);
  CHECK(cm.fn == 1);
  CHECK(cm.tn == 1);
  CHECK(cm.fp == 0);
}

TEST_CASE("all-positive predictions on a balanced set: recall 1, precision 1/2") {
  std::vector<PredictionRecord> preds(20);
  for (int i = 0; i < 20; ++i) {
    preds[static_cast<size_t>(i)].ok = true;
    preds[static_cast<size_t>(i)].label = i < 10 ? 1 : 0;
    preds[static_cast<size_t>(i)].predicted = 1;
  }
  const MetricsReport m = metrics_from_confusion(confusion_from_predictions(preds));
  CHECK(m.recall == 1.0);
  CHECK(m.precision == 0.5);
}

// --- report files ---------------------------------------------------------------

TEST_CASE("emit_reports writes the three report files with pinned formats") {
  testutil::TempDir tmp("reports");
  const ConfusionMatrix cm{388, 34, 2, 200};
  const MetricsReport m = metrics_from_confusion(cm);
  std::vector<EpochStats> history = {{1, 0.6931, 0.5, 12.5}, {2, 0.52, 0.75, 12.4}};
  emit_reports(cm, m, history, tmp.file("out"));

  std::ifstream mf(tmp.file("out") + "/metrics.json");
  const std::string metrics_text((std::istreambuf_iterator<char>(mf)),
                                 std::istreambuf_iterator<char>());
  CHECK(metrics_text.find("\"recall\": 0.994872") != std::string::npos);
  CHECK(metrics_text.find("\"accuracy\": 0.942308") != std::string::npos);

  std::ifstream cf(tmp.file("out") + "/confusion.csv");
  std::string line;
  std::getline(cf, line);
  CHECK(line == ",NORMAL,PNEUMONIA");
  std::getline(cf, line);
  CHECK(line == "NORMAL,200,34");
  std::getline(cf, line);
  CHECK(line == "PNEUMONIA,2,388");

  std::ifstream hf(tmp.file("out") + "/history.csv");
  std::getline(hf, line);
  CHECK(line == "epoch,loss,accuracy,seconds");
  int rows = 0;
  while (std::getline(hf, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("emit_reports: empty history keeps only the header; bad dir raises IoError") {
  testutil::TempDir tmp("reports2");
  const ConfusionMatrix cm{1, 0, 0, 1};
  emit_reports(cm, metrics_from_confusion(cm), {}, tmp.file("out"));
  std::ifstream hf(tmp.file("out") + "/history.csv");
  std::string line;
  std::getline(hf, line);
  CHECK(line == "epoch,loss,accuracy,seconds");
  CHECK_FALSE(std::getline(hf, line));

  testutil::write_bytes(tmp.file("not_a_dir"), {'x'});
  CHECK_THROWS_AS(emit_reports(cm, metrics_from_confusion(cm), {}, tmp.file("not_a_dir")), IoError);
}

// --- the training loop -----------------------------------------------------------

namespace {

TrainConfig tiny_train_config(int max_epochs, uint64_t seed) {
  TrainConfig cfg;
  cfg.max_epochs = max_epochs;
  cfg.batch_size = 4;
  cfg.patience = max_epochs;  // overfit runs must not stop early
  cfg.seed = seed;
  return cfg;
}

AdamConfig overfit_adam() {
  AdamConfig cfg;
  cfg.lr = 1e-2;  // the reference rate cannot move 400 steps far enough to overfit
  return cfg;
}

}  // namespace

TEST_CASE("train overfits the 8-image separable synthetic set") {
  testutil::TempDir tmp("overfit");
  testutil::write_synthetic_dataset(tmp.path, 4, 28);
  const DatasetManifest manifest = load_manifest(tmp.path.string(), Split::train);
  REQUIRE(manifest.records.size() == 8);

  const ModelSpec spec = testutil::build_tiny_spec();
  PreprocessConfig pp;
  pp.target_h = pp.target_w = 28;

  const TrainResult r = train(spec, init_params<float>(spec, 42), manifest,
                              tiny_train_config(200, 42), std::nullopt, overfit_adam(), pp,
                              tmp.file("out"));
  REQUIRE(!r.history.empty());
  CHECK(r.history.size() <= 200);
  CHECK(r.history.back().accuracy == 1.0);
  CHECK(r.history.back().loss < 0.01);
  CHECK(std::filesystem::exists(r.best_checkpoint_path));
}

TEST_CASE("training is bit-reproducible per seed at any thread count") {
  testutil::TempDir tmp("determinism");
  testutil::write_synthetic_dataset(tmp.path, 4, 28);
  const DatasetManifest manifest = load_manifest(tmp.path.string(), Split::train);
  const ModelSpec spec = testutil::build_tiny_spec();
  PreprocessConfig pp;
  pp.target_h = pp.target_w = 28;
  AugmentationConfig aug;  // reference ranges, exercising the augment path too

  auto run = [&](int threads, const std::string& dir) {
    return train(spec, init_params<float>(spec, 7), manifest, tiny_train_config(6, 7), aug,
                 overfit_adam(), pp, tmp.file(dir), threads);
  };
  const TrainResult a = run(1, "a");
  const TrainResult b = run(2, "b");
  const TrainResult c = run(4, "c");

  REQUIRE(a.history.size() == b.history.size());
  REQUIRE(a.history.size() == c.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].loss == b.history[i].loss);  // bitwise
    CHECK(a.history[i].loss == c.history[i].loss);
    CHECK(a.history[i].accuracy == b.history[i].accuracy);
  }
  CHECK(testutil::read_bytes(a.best_checkpoint_path) == testutil::read_bytes(b.best_checkpoint_path));
  CHECK(testutil::read_bytes(a.best_checkpoint_path) == testutil::read_bytes(c.best_checkpoint_path));

  const TrainResult other = train(spec, init_params<float>(spec, 8), manifest,
                                  tiny_train_config(6, 8), aug, overfit_adam(), pp, tmp.file("d"));
  bool any_diff = false;
  for (size_t i = 0; i < a.history.size() && i < other.history.size(); ++i)
    any_diff = any_diff || a.history[i].loss != other.history[i].loss;
  CHECK(any_diff);
}

TEST_CASE("a frozen model plateaus and stops exactly at patience") {
  testutil::TempDir tmp("plateau");
  // two samples: their loss sum is order-independent bitwise (a+b == b+a),
  // so the reshuffled epochs reproduce the identical plateau loss
  testutil::write_synthetic_dataset(tmp.path, 1, 28);
  const DatasetManifest manifest = load_manifest(tmp.path.string(), Split::train);

  ModelSpec spec = testutil::build_tiny_spec();
  spec.layers[8].rate = 0.0;  // no dropout noise across epochs

  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.batch_size = 4;  // whole set in one batch
  cfg.patience = 5;
  cfg.seed = 3;
  AdamConfig adam;
  adam.lr = 1e-30;  // updates vanish below float resolution
  adam.weight_decay = 0.0;
  PreprocessConfig pp;
  pp.target_h = pp.target_w = 28;

  const TrainResult r = train(spec, init_params<float>(spec, 3), manifest, cfg, std::nullopt, adam,
                              pp, tmp.file("out"));
  CHECK(r.stopped_early);
  // epoch 1 improves on +inf; epochs 2..6 are identical -> stop after epoch 6
  CHECK(r.history.size() == 6);
  for (size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i].loss == r.history[0].loss);
}

TEST_CASE("single-batch epoch loss ignores the shuffle order") {
  testutil::TempDir tmp("orderfree");
  testutil::write_synthetic_dataset(tmp.path, 2, 28);
  const DatasetManifest manifest = load_manifest(tmp.path.string(), Split::train);

  ModelSpec spec = testutil::build_tiny_spec();
  spec.layers[8].rate = 0.0;
  TrainConfig cfg;
  cfg.max_epochs = 1;
  cfg.batch_size = 4;
  cfg.patience = 1;
  AdamConfig adam;
  adam.lr = 1e-30;
  adam.weight_decay = 0.0;
  PreprocessConfig pp;
  pp.target_h = pp.target_w = 28;

  cfg.seed = 1;
  const TrainResult a = train(spec, init_params<float>(spec, 99), manifest, cfg, std::nullopt,
                              adam, pp, tmp.file("a"));
  cfg.seed = 2;  // different shuffle, same single batch contents
  const TrainResult b = train(spec, init_params<float>(spec, 99), manifest, cfg, std::nullopt,
                              adam, pp, tmp.file("b"));
  // identical up to double-accumulation reordering noise
  CHECK(a.history[0].loss == doctest::Approx(b.history[0].loss).epsilon(1e-12));
}

TEST_CASE("train validates its configuration") {
  testutil::TempDir tmp("valcfg");
  testutil::write_synthetic_dataset(tmp.path, 1, 28);
  const DatasetManifest manifest = load_manifest(tmp.path.string(), Split::train);
  const ModelSpec spec = testutil::build_tiny_spec();
  PreprocessConfig pp;
  pp.target_h = pp.target_w = 28;

  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(spec, init_params<float>(spec, 1), manifest, cfg, std::nullopt, {}, pp,
                        tmp.file("out")),
                  ConfigError);
  cfg = TrainConfig{};
  cfg.patience = 0;
  CHECK_THROWS_AS(train(spec, init_params<float>(spec, 1), manifest, cfg, std::nullopt, {}, pp,
                        tmp.file("out")),
                  ConfigError);
}

TEST_CASE("exploding training aborts with a numeric error") {
  testutil::TempDir tmp("explode");
  testutil::write_synthetic_dataset(tmp.path, 2, 28);
  const DatasetManifest manifest = load_manifest(tmp.path.string(), Split::train);
  const ModelSpec spec = testutil::build_tiny_spec();
  PreprocessConfig pp;
  pp.target_h = pp.target_w = 28;
  AdamConfig adam;
  adam.lr = 1e30;  // guaranteed blow-up
  CHECK_THROWS_AS(train(spec, init_params<float>(spec, 1), manifest, tiny_train_config(5, 1),
                        std::nullopt, adam, pp, tmp.file("out")),
                  NumericError);
}

// --- evaluate ---------------------------------------------------------------------

TEST_CASE("evaluate: deterministic confusion, decode failures skipped but reported") {
  testutil::TempDir tmp("eval");
  testutil::write_synthetic_dataset(tmp.path, 3, 28);
  // an undecodable file inside the split
  testutil::write_bytes((tmp.path / "train/NORMAL/broken.pgm").string(), {'P', '5', ' '});
  const DatasetManifest manifest = load_manifest(tmp.path.string(), Split::train);
  REQUIRE(manifest.records.size() == 7);

  const ModelSpec spec = testutil::build_tiny_spec();
  const ModelParams<float> params = init_params<float>(spec, 21);
  PreprocessConfig pp;
  pp.target_h = pp.target_w = 28;

  const EvalResult a = evaluate(params, spec, manifest, pp);
  const EvalResult b = evaluate(params, spec, manifest, pp, 3);
  CHECK(a.failed == 1);
  CHECK(a.confusion.total() == 6);
  CHECK(a.confusion.tp == b.confusion.tp);
  CHECK(a.confusion.fp == b.confusion.fp);
  CHECK(a.confusion.fn == b.confusion.fn);
  CHECK(a.confusion.tn == b.confusion.tn);

  bool found_failure = false;
  for (const auto& p : a.predictions)
    if (!p.ok && p.path.ends_with("broken.pgm")) found_failure = true;
  CHECK(found_failure);

  for (const auto& p : a.predictions) {
    if (!p.ok) continue;
    CHECK(p.probs[0] >= 0.0);
    CHECK(p.probs[0] <= 1.0);
    CHECK(p.probs[0] + p.probs[1] == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("evaluate after overfitting reproduces the training labels") {
  testutil::TempDir tmp("eval_fit");
  testutil::write_synthetic_dataset(tmp.path, 4, 28);
  const DatasetManifest manifest = load_manifest(tmp.path.string(), Split::train);
  const ModelSpec spec = testutil::build_tiny_spec();
  PreprocessConfig pp;
  pp.target_h = pp.target_w = 28;

  const TrainResult r = train(spec, init_params<float>(spec, 5), manifest,
                              tiny_train_config(200, 5), std::nullopt, overfit_adam(), pp,
                              tmp.file("out"));
  REQUIRE(r.history.back().accuracy == 1.0);

  const EvalResult e = evaluate(r.params, spec, manifest, pp);
  CHECK(e.metrics.accuracy == 1.0);
  CHECK(e.confusion.fp == 0);
  CHECK(e.confusion.fn == 0);
}
