// SPDX-License-Identifier: Apache-2.0
#include "lpn/gradcheck.hpp"

#include <cmath>

#include "lpn/loss.hpp"

namespace lpn {

ModelSpec build_reduced_spec() {
  // Narrow channels die too easily under Glorot signs (a net-negative 1x1
  // kernel column zeroes a whole ReLU map and parks the stack on the kink),
  // so the late blocks keep 2x2 spatial extent and eight channels.
  ModelSpec spec;
  spec.input_h = spec.input_w = 20;
  spec.input_c = 1;
  spec.layers = {
      LayerDesc::conv("conv1_1", 2, 3), LayerDesc::conv("conv1_2", 2, 3),
      LayerDesc::maxpool("pool1", 2),
      LayerDesc::conv("conv2_1", 3, 3), LayerDesc::conv("conv2_2", 3, 3),
      LayerDesc::maxpool("pool2", 2),
      LayerDesc::conv("conv3_1", 8, 1), LayerDesc::conv("conv3_2", 8, 1),
      LayerDesc::conv("conv4_1", 8, 1), LayerDesc::conv("conv4_2", 8, 1),
      LayerDesc::flatten(),
      LayerDesc::dense("dense1", 8, Activation::relu),
      LayerDesc::dropout("dropout", 0.2),
      LayerDesc::dense("dense2", 2, Activation::softmax),
  };
  return spec;
}

namespace {

// Loss of a full train-mode forward pass. The dropout stream is a pure
// function of the seed, so repeated evaluations see identical masks and the
// loss is a deterministic function of the parameters.
double loss_at(const ModelParams<double>& params, const ModelSpec& spec,
               const Tensor<double>& batch, const Tensor<double>& targets, uint64_t seed,
               const WeightedCrossEntropySpec& loss_spec, ForwardResult<double>* fwd_out = nullptr) {
  ForwardResult<double> fwd =
      model_forward(params, spec, batch, RunMode::train,
                    RngStream::from(seed, {kTagDropout, 1, 0}), fwd_out != nullptr);
  LossResult<double> loss = weighted_ce_loss(fwd.probs, targets, loss_spec);
  if (fwd_out) *fwd_out = std::move(fwd);
  return loss.loss;
}

}  // namespace

GradCheckReport gradient_check(const ModelSpec& spec, uint64_t seed, double tolerance,
                               Index batch_size) {
  ModelParams<double> params = init_params<double>(spec, seed);

  // Zero biases park dead ReLU maps exactly on the kink, where the defined
  // subgradient and one-sided finite differences disagree. Random positive
  // biases keep every preactivation off zero, as a derivative check needs.
  RngStream bias_rng = RngStream::from(seed, {0xB1A5});
  for (size_t i = 0; i < params.names.size(); ++i)
    if (params.names[i].ends_with(".bias"))
      for (Index k = 0; k < params.tensors[i].size(); ++k)
        params.tensors[i][k] = bias_rng.uniform(0.02, 0.10);

  // Seeded random batch in [0,1], alternating one-hot targets.
  RngStream data_rng = RngStream::from(seed, {0xDA7A});
  Tensor<double> batch(Shape{batch_size, spec.input_h, spec.input_w, spec.input_c});
  for (Index i = 0; i < batch.size(); ++i) batch[i] = data_rng.next_double();
  Tensor<double> targets(Shape{batch_size, 2});
  for (Index n = 0; n < batch_size; ++n) targets.at(n, n % 2) = 1.0;

  WeightedCrossEntropySpec loss_spec;  // reference class weights
  ForwardResult<double> fwd;
  loss_at(params, spec, batch, targets, seed, loss_spec, &fwd);
  LossResult<double> loss = weighted_ce_loss(fwd.probs, targets, loss_spec);
  ModelParams<double> analytic = model_backward(params, spec, fwd, loss.d_logits);

  const double step = 1e-5;
  GradCheckReport report;
  report.pass = true;

  // Group tensors by layer: names are "<layer>.kernel" / "<layer>.bias".
  for (size_t t = 0; t < params.tensors.size();) {
    const std::string layer = params.names[t].substr(0, params.names[t].find('.'));
    double diff_sq = 0, fd_sq = 0;
    while (t < params.tensors.size() && params.names[t].substr(0, params.names[t].find('.')) == layer) {
      Tensor<double>& theta = params.tensors[t];
      for (Index k = 0; k < theta.size(); ++k) {
        const double saved = theta[k];
        theta[k] = saved + step;
        const double up = loss_at(params, spec, batch, targets, seed, loss_spec);
        theta[k] = saved - step;
        const double down = loss_at(params, spec, batch, targets, seed, loss_spec);
        theta[k] = saved;
        const double fd = (up - down) / (2 * step);
        const double d = analytic.tensors[t][k] - fd;
        diff_sq += d * d;
        fd_sq += fd * fd;
      }
      ++t;
    }
    GradCheckGroup g;
    g.layer = layer;
    g.rel_err = std::sqrt(diff_sq) / std::max(std::sqrt(fd_sq), 1e-12);
    g.pass = g.rel_err <= tolerance;
    report.max_rel_err = std::max(report.max_rel_err, g.rel_err);
    report.pass = report.pass && g.pass;
    report.groups.push_back(std::move(g));
  }
  return report;
}

}  // namespace lpn
