// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "lpn/model.hpp"
#include "lpn/pipeline.hpp"
#include "lpn/train.hpp"

namespace lpn {

/// Binary confusion counts; the positive class is Pneumonia (label 1).
struct ConfusionMatrix {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  long long total() const { return tp + fp + fn + tn; }
};

struct MetricsReport {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  bool precision_zero_division = false;
  bool recall_zero_division = false;
  bool f1_zero_division = false;
};

/// accuracy (tp+tn)/total, precision tp/(tp+fp), recall tp/(tp+fn),
/// f1 2PR/(P+R). A zero denominator yields 0 with its flag set.
MetricsReport metrics_from_confusion(const ConfusionMatrix& cm);

struct PredictionRecord {
  std::string path;
  int label = -1;      // ground truth when known
  int predicted = -1;
  std::array<double, 2> probs = {0, 0};
  bool ok = false;
  std::string error;   // decode failure message when !ok
};

struct EvalResult {
  ConfusionMatrix confusion;
  MetricsReport metrics;
  std::vector<PredictionRecord> predictions;  // one per manifest record
  long long failed = 0;                       // decode failures (skipped)
};

/// Aggregates successful predictions into confusion counts (positive = 1);
/// failed records are skipped.
ConfusionMatrix confusion_from_predictions(const std::vector<PredictionRecord>& predictions);

/// Inference over a manifest: no augmentation, predicted class = argmax.
/// Decode failures are recorded per path and evaluation continues.
EvalResult evaluate(const ModelParams<float>& params, const ModelSpec& spec,
                    const DatasetManifest& manifest, const PreprocessConfig& preprocess,
                    int threads = 1);

// Report files. Metrics values are written with 6 decimal places.
void write_metrics_json(const MetricsReport& metrics, const std::string& path);
void write_confusion_csv(const ConfusionMatrix& cm, const std::string& path);
void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);

/// Writes metrics.json, confusion.csv and history.csv into out_dir.
void emit_reports(const ConfusionMatrix& cm, const MetricsReport& metrics,
                  const std::vector<EpochStats>& history, const std::string& out_dir);

}  // namespace lpn
