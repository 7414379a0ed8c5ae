// SPDX-License-Identifier: Apache-2.0
#include "lpn/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "lpn/checkpoint.hpp"
#include "lpn/parallel.hpp"

namespace lpn {

EarlyStopDecision early_stop_update(const EarlyStopState& state, double epoch_loss, int patience) {
  if (std::isnan(epoch_loss)) throw NumericError("early stopping: NaN epoch loss");
  EarlyStopDecision d;
  d.state = state;
  if (epoch_loss < state.best_loss) {
    d.state.best_loss = epoch_loss;
    d.state.epochs_since_improvement = 0;
    d.improved = true;
  } else {
    d.state.epochs_since_improvement += 1;
  }
  d.stop = d.state.epochs_since_improvement >= patience;
  return d;
}

namespace {

void validate_config(const TrainConfig& c) {
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (c.patience < 1) throw ConfigError("patience must be >= 1");
  if (c.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (c.class_weights.size() != 2) throw ConfigError("class_weights must list two classes");
  for (double w : c.class_weights)
    if (!(w > 0)) throw ConfigError("class_weights must be > 0");
}

std::vector<Index> shuffled_order(Index n, uint64_t seed, int epoch) {
  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  RngStream rng = RngStream::from(seed, {kTagShuffle, static_cast<uint64_t>(epoch)});
  for (Index i = n - 1; i > 0; --i)
    std::swap(order[static_cast<size_t>(i)], order[rng.below(static_cast<uint64_t>(i) + 1)]);
  return order;
}

Index argmax_row(const Tensor<float>& m, Index row) {
  Index best = 0;
  for (Index k = 1; k < m.shape()[1]; ++k)
    if (m.at(row, k) > m.at(row, best)) best = k;
  return best;
}

}  // namespace

TrainResult train(const ModelSpec& spec, ModelParams<float> params,
                  const DatasetManifest& manifest, const TrainConfig& config,
                  const std::optional<AugmentationConfig>& augment,
                  const AdamConfig& adam_config, const PreprocessConfig& preprocess,
                  const std::string& out_dir, int threads,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  validate_config(config);
  if (manifest.records.empty()) throw DatasetError("training manifest is empty");
  std::filesystem::create_directories(out_dir);

  const Index n_samples = static_cast<Index>(manifest.records.size());
  WeightedCrossEntropySpec loss_spec{config.class_weights, config.loss_normalization};
  AdamState<float> adam = AdamState<float>::init(params.tensors, adam_config);
  EarlyStopState early;

  TrainResult result;
  result.best_checkpoint_path = (std::filesystem::path(out_dir) / "best.lpnw").string();

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<Index> order = shuffled_order(n_samples, config.seed, epoch);

    double loss_sum = 0, norm_sum = 0;
    Index correct = 0;
    Index batch_index = 0;
    for (Index start = 0; start < n_samples; start += config.batch_size, ++batch_index) {
      const Index end = std::min(start + config.batch_size, n_samples);
      const std::vector<Index> slice(order.begin() + start, order.begin() + end);

      Batch batch = make_batch(manifest, slice, augment, preprocess,
                               RngStream::from(config.seed, {kTagAugment, static_cast<uint64_t>(epoch)}),
                               threads);
      ForwardResult<float> fwd = model_forward(
          params, spec, batch.images, RunMode::train,
          RngStream::from(config.seed,
                          {kTagDropout, static_cast<uint64_t>(epoch), static_cast<uint64_t>(batch_index)}),
          /*cached=*/true, threads);
      LossResult<float> loss = weighted_ce_loss(fwd.probs, batch.labels, loss_spec);
      if (!std::isfinite(loss.loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + " (best so far " +
                           std::to_string(early.best_loss) + "); aborting");

      ModelParams<float> grads = model_backward(params, spec, fwd, loss.d_logits, threads);
      adam_step(params.tensors, grads.tensors, adam);

      loss_sum += loss.loss * loss.normalizer;
      norm_sum += loss.normalizer;
      for (Index r = 0; r < static_cast<Index>(slice.size()); ++r)
        if (argmax_row(fwd.probs, r) == argmax_row(batch.labels, r)) ++correct;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = loss_sum / norm_sum;
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(n_samples);
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);

    EarlyStopDecision decision = early_stop_update(early, stats.loss, config.patience);
    early = decision.state;
    if (decision.improved) save_weights(params, result.best_checkpoint_path);
    if (decision.stop) {
      result.stopped_early = true;
      break;
    }
  }

  result.best_loss = early.best_loss;
  result.params = std::move(params);
  return result;
}

}  // namespace lpn
