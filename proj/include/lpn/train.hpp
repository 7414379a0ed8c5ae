// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lpn/loss.hpp"
#include "lpn/model.hpp"
#include "lpn/optim.hpp"
#include "lpn/pipeline.hpp"

namespace lpn {

struct TrainConfig {
  int max_epochs = 100;
  Index batch_size = 4;
  int patience = 5;
  std::vector<double> class_weights = {2.0, 1.2};
  LossNormalization loss_normalization = LossNormalization::weight_sum;
  uint64_t seed = 42;
};

/// Early stopping monitors the training loss: a strict improvement resets the
/// counter, `patience` consecutive non-improvements stop the run.
struct EarlyStopState {
  double best_loss = std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
};

struct EarlyStopDecision {
  EarlyStopState state;
  bool improved = false;
  bool stop = false;
};

EarlyStopDecision early_stop_update(const EarlyStopState& state, double epoch_loss, int patience);

struct EpochStats {
  int epoch = 0;       // 1-based
  double loss = 0;     // weighted mean over the epoch's samples
  double accuracy = 0; // on the augmented training batches as seen
  double seconds = 0;
};

struct TrainResult {
  ModelParams<float> params;           // state at the end of the run
  std::string best_checkpoint_path;    // written whenever best_loss improved
  std::vector<EpochStats> history;
  double best_loss = 0;
  bool stopped_early = false;
};

/// Runs the training loop: per-epoch seeded shuffle, batches of
/// `batch_size` (short final batch kept), fresh per-sample augmentation each
/// epoch, weighted cross-entropy, one Adam step per batch. Checkpoints to
/// <out_dir>/best.lpnw on every improvement. Bit-reproducible for a given
/// seed at any thread count.
TrainResult train(const ModelSpec& spec, ModelParams<float> params,
                  const DatasetManifest& manifest, const TrainConfig& config,
                  const std::optional<AugmentationConfig>& augment,
                  const AdamConfig& adam_config, const PreprocessConfig& preprocess,
                  const std::string& out_dir, int threads = 1,
                  const std::function<void(const EpochStats&)>& on_epoch = nullptr);

}  // namespace lpn
