// SPDX-License-Identifier: Apache-2.0
#include "lpn/eval.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lpn/parallel.hpp"

namespace lpn {

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm) {
  if (cm.tp < 0 || cm.fp < 0 || cm.fn < 0 || cm.tn < 0)
    throw InputError("confusion counts must be non-negative");
  const long long total = cm.total();
  if (total == 0) throw InputError("confusion matrix is empty");

  MetricsReport r;
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(total);
  if (cm.tp + cm.fp > 0) {
    r.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  } else {
    r.precision_zero_division = true;
  }
  if (cm.tp + cm.fn > 0) {
    r.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  } else {
    r.recall_zero_division = true;
  }
  if (r.precision + r.recall > 0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  } else {
    r.f1_zero_division = true;
  }
  return r;
}

ConfusionMatrix confusion_from_predictions(const std::vector<PredictionRecord>& predictions) {
  ConfusionMatrix cm;
  for (const PredictionRecord& p : predictions) {
    if (!p.ok) continue;
    if (p.label == 1)
      (p.predicted == 1 ? cm.tp : cm.fn) += 1;
    else
      (p.predicted == 1 ? cm.fp : cm.tn) += 1;
  }
  return cm;
}

EvalResult evaluate(const ModelParams<float>& params, const ModelSpec& spec,
                    const DatasetManifest& manifest, const PreprocessConfig& preprocess,
                    int threads) {
  if (manifest.records.empty()) throw DatasetError("evaluation manifest is empty");

  EvalResult result;
  result.predictions.resize(manifest.records.size());

  parallel_for(static_cast<Index>(manifest.records.size()), threads, [&](Index i) {
    const ImageRecord& rec = manifest.records[static_cast<size_t>(i)];
    PredictionRecord& out = result.predictions[static_cast<size_t>(i)];
    out.path = rec.path;
    out.label = rec.label;
    try {
      Tensor<float> raw = decode_image(rec.path);
      Tensor<float> img = preprocess_image(raw, preprocess, nullptr);
      Tensor<float> batch = reshape(img, Shape{1, preprocess.target_h, preprocess.target_w, 1});
      ForwardResult<float> fwd =
          model_forward(params, spec, batch, RunMode::infer, RngStream(0), /*cached=*/false);
      out.probs = {static_cast<double>(fwd.probs.at(0, 0)), static_cast<double>(fwd.probs.at(0, 1))};
      out.predicted = out.probs[1] > out.probs[0] ? 1 : 0;
      out.ok = true;
    } catch (const DecodeError& e) {
      out.ok = false;
      out.error = e.what();
    }
  });

  result.confusion = confusion_from_predictions(result.predictions);
  for (const PredictionRecord& p : result.predictions) result.failed += !p.ok;
  if (result.confusion.total() == 0) throw InputError("no sample could be evaluated");
  result.metrics = metrics_from_confusion(result.confusion);
  return result;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write: " + path);
  return f;
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void write_metrics_json(const MetricsReport& m, const std::string& path) {
  std::ofstream f = open_out(path);
  f << "{\n";
  f << "  \"accuracy\": " << fixed6(m.accuracy) << ",\n";
  f << "  \"precision\": " << fixed6(m.precision) << ",\n";
  f << "  \"recall\": " << fixed6(m.recall) << ",\n";
  f << "  \"f1\": " << fixed6(m.f1) << ",\n";
  f << "  \"zero_division\": [";
  bool first = true;
  for (const auto& [flag, name] :
       {std::pair{m.precision_zero_division, "precision"}, {m.recall_zero_division, "recall"},
        {m.f1_zero_division, "f1"}}) {
    if (!flag) continue;
    f << (first ? "" : ", ") << '"' << name << '"';
    first = false;
  }
  f << "]\n}\n";
  if (!f) throw IoError("write failed: " + path);
}

void write_confusion_csv(const ConfusionMatrix& cm, const std::string& path) {
  std::ofstream f = open_out(path);
  // rows = actual class, columns = predicted class
  f << ",NORMAL,PNEUMONIA\n";
  f << "NORMAL," << cm.tn << "," << cm.fp << "\n";
  f << "PNEUMONIA," << cm.fn << "," << cm.tp << "\n";
  if (!f) throw IoError("write failed: " + path);
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::ofstream f = open_out(path);
  f << "epoch,loss,accuracy,seconds\n";
  char buf[128];
  for (const EpochStats& e : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.6f,%.3f\n", e.epoch, e.loss, e.accuracy, e.seconds);
    f << buf;
  }
  if (!f) throw IoError("write failed: " + path);
}

void emit_reports(const ConfusionMatrix& cm, const MetricsReport& metrics,
                  const std::vector<EpochStats>& history, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw IoError("cannot create output directory: " + out_dir);
  write_metrics_json(metrics, (fs::path(out_dir) / "metrics.json").string());
  write_confusion_csv(cm, (fs::path(out_dir) / "confusion.csv").string());
  write_history_csv(history, (fs::path(out_dir) / "history.csv").string());
}

}  // namespace lpn
