// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lpn/tensor.hpp"

namespace lpn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  double weight_decay = 1e-5;
  // Decoupled decay shrinks parameters multiplicatively after the adaptive
  // step; the classic variant adds weight_decay * theta to the gradient.
  bool decoupled_decay = true;
};

/// Per-parameter first/second moment accumulators plus the shared step count.
template <typename Scalar>
struct AdamState {
  AdamConfig config;
  long long t = 0;
  std::vector<Tensor<Scalar>> m;
  std::vector<Tensor<Scalar>> v;

  static AdamState init(const std::vector<Tensor<Scalar>>& params, const AdamConfig& config) {
    AdamState s;
    s.config = config;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
      s.m.emplace_back(p.shape());
      s.v.emplace_back(p.shape());
    }
    return s;
  }
};

/// One Adam update over a parameter list:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr * mhat / (sqrt(vhat) + eps)
/// followed by decoupled decay theta <- theta * (1 - lr * wd) when enabled.
template <typename Scalar>
void adam_step(std::vector<Tensor<Scalar>>& params, const std::vector<Tensor<Scalar>>& grads,
               AdamState<Scalar>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: parameter/gradient/state count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape())
      throw ShapeError("adam_step: gradient " + std::to_string(i) + " shape " +
                       grads[i].shape().str() + " != parameter shape " + params[i].shape().str());
    if (!grads[i].all_finite()) throw NumericError("adam_step: non-finite gradient in tensor " + std::to_string(i));
  }

  const AdamConfig& c = state.config;
  state.t += 1;
  const Scalar b1 = static_cast<Scalar>(c.beta1), b2 = static_cast<Scalar>(c.beta2);
  const Scalar lr = static_cast<Scalar>(c.lr), eps = static_cast<Scalar>(c.epsilon);
  const Scalar m_corr = static_cast<Scalar>(1.0 - std::pow(c.beta1, static_cast<double>(state.t)));
  const Scalar v_corr = static_cast<Scalar>(1.0 - std::pow(c.beta2, static_cast<double>(state.t)));
  const Scalar decay = static_cast<Scalar>(c.weight_decay);

  for (size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i].array();
    auto& m = state.m[i].array();
    auto& v = state.v[i].array();
    if (!c.decoupled_decay && c.weight_decay != 0.0) {
      // classic L2: fold decay into the gradient before the moments
      typename Tensor<Scalar>::Array g = grads[i].array() + decay * theta;
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.square();
    } else {
      const auto& g = grads[i].array();
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.square();
    }
    theta -= lr * (m / m_corr) / ((v / v_corr).sqrt() + eps);
    if (c.decoupled_decay && c.weight_decay != 0.0) theta *= (Scalar(1) - lr * decay);
  }
}

}  // namespace lpn
