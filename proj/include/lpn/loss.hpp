// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "lpn/tensor.hpp"

namespace lpn {

enum class LossNormalization {
  weight_sum,  // divide by the sum of sample weights (default)
  batch_size,  // divide by N
};

/// Class-weighted categorical cross-entropy. Weights counter the dataset's
/// class imbalance: {class 0 (Normal): 2.0, class 1 (Pneumonia): 1.2}.
struct WeightedCrossEntropySpec {
  std::vector<double> class_weights = {2.0, 1.2};
  LossNormalization normalization = LossNormalization::weight_sum;
};

template <typename Scalar>
struct LossResult {
  double loss = 0;          // normalized batch loss
  double normalizer = 0;    // sum of sample weights (or N) the batch divided by
  Tensor<Scalar> d_logits;  // [N,K] gradient w.r.t. pre-softmax logits
};

/// Per-sample loss -ln p[y_n] weighted by class_weights[y_n]; fused softmax
/// gradient d_logits[n] = w_n * (p[n] - t[n]) / normalizer. The hit
/// probability is clamped to >= 1e-12 before the log so a confidently wrong
/// prediction cannot produce -inf in single precision.
template <typename Scalar>
LossResult<Scalar> weighted_ce_loss(const Tensor<Scalar>& probs, const Tensor<Scalar>& targets,
                                    const WeightedCrossEntropySpec& spec) {
  if (probs.rank() != 2 || targets.shape() != probs.shape())
    throw ShapeError("weighted_ce_loss: probs/targets must share an [N,K] shape");
  const Index N = probs.shape()[0], K = probs.shape()[1];
  if (static_cast<Index>(spec.class_weights.size()) != K)
    throw ConfigError("weighted_ce_loss: one class weight per class required");
  for (double w : spec.class_weights)
    if (!(w > 0)) throw ConfigError("weighted_ce_loss: class weights must be > 0");

  std::vector<Index> labels(static_cast<size_t>(N));
  double weight_sum = 0;
  for (Index n = 0; n < N; ++n) {
    double row_sum = 0;
    Index hot = -1;
    for (Index k = 0; k < K; ++k) {
      const double t = targets.at(n, k);
      if (t == 1.0 && hot < 0) {
        hot = k;
      } else if (t != 0.0) {
        hot = -2;
        break;
      }
      row_sum += probs.at(n, k);
    }
    if (hot < 0) throw InputError("weighted_ce_loss: target row " + std::to_string(n) + " is not one-hot");
    if (std::abs(row_sum - 1.0) > 1e-5)
      throw InputError("weighted_ce_loss: probs row " + std::to_string(n) + " does not sum to 1");
    labels[static_cast<size_t>(n)] = hot;
    weight_sum += spec.class_weights[static_cast<size_t>(hot)];
  }

  const double norm =
      spec.normalization == LossNormalization::weight_sum ? weight_sum : static_cast<double>(N);

  LossResult<Scalar> r;
  r.normalizer = norm;
  r.d_logits = Tensor<Scalar>(probs.shape());
  double weighted_nll = 0;
  for (Index n = 0; n < N; ++n) {
    const Index y = labels[static_cast<size_t>(n)];
    const double w = spec.class_weights[static_cast<size_t>(y)];
    const double p_hit = std::max(static_cast<double>(probs.at(n, y)), 1e-12);
    weighted_nll += w * -std::log(p_hit);
    for (Index k = 0; k < K; ++k) {
      const double t = (k == y) ? 1.0 : 0.0;
      r.d_logits.at(n, k) = static_cast<Scalar>(w * (static_cast<double>(probs.at(n, k)) - t) / norm);
    }
  }
  r.loss = weighted_nll / norm;
  return r;
}

}  // namespace lpn
