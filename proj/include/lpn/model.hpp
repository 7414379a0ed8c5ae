// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lpn/nn_ops.hpp"
#include "lpn/rng.hpp"
#include "lpn/tensor.hpp"

// The reference architecture: four blocks of two valid-padding convolutions
// followed by max pooling (16/16, 32/32 filters at 5x5 with 3x3 pools, then
// 64/64, 128/128 filters at 3x3 with 2x2 pools), a flatten, a 128-unit ReLU
// dense layer, dropout 0.2, and a 2-way softmax head. 388,082 trainable
// parameters on a 224x224x1 input.

namespace lpn {

enum class LayerKind { conv, maxpool, flatten, dense, dropout };
enum class Activation { none, relu, softmax };
enum class RunMode { train, infer };

struct LayerDesc {
  LayerKind kind = LayerKind::flatten;
  std::string name;
  Activation act = Activation::none;
  Index filters = 0, kernel_h = 0, kernel_w = 0;  // conv
  Index pool = 0;                                 // maxpool (square, stride == size)
  Index units = 0;                                // dense
  double rate = 0.0;                              // dropout

  static LayerDesc conv(std::string name, Index filters, Index kernel, Activation act = Activation::relu) {
    LayerDesc d;
    d.kind = LayerKind::conv;
    d.name = std::move(name);
    d.filters = filters;
    d.kernel_h = d.kernel_w = kernel;
    d.act = act;
    return d;
  }
  static LayerDesc maxpool(std::string name, Index pool) {
    LayerDesc d;
    d.kind = LayerKind::maxpool;
    d.name = std::move(name);
    d.pool = pool;
    return d;
  }
  static LayerDesc flatten(std::string name = "flatten") {
    LayerDesc d;
    d.kind = LayerKind::flatten;
    d.name = std::move(name);
    return d;
  }
  static LayerDesc dense(std::string name, Index units, Activation act) {
    LayerDesc d;
    d.kind = LayerKind::dense;
    d.name = std::move(name);
    d.units = units;
    d.act = act;
    return d;
  }
  static LayerDesc dropout(std::string name, double rate) {
    LayerDesc d;
    d.kind = LayerKind::dropout;
    d.name = std::move(name);
    d.rate = rate;
    return d;
  }
};

struct ModelSpec {
  Index input_h = 224, input_w = 224, input_c = 1;
  std::vector<LayerDesc> layers;
};

/// The reference 16-descriptor stack.
inline ModelSpec build_lightpneumonet() {
  ModelSpec spec;
  spec.layers = {
      LayerDesc::conv("conv1_1", 16, 5), LayerDesc::conv("conv1_2", 16, 5),
      LayerDesc::maxpool("pool1", 3),
      LayerDesc::conv("conv2_1", 32, 5), LayerDesc::conv("conv2_2", 32, 5),
      LayerDesc::maxpool("pool2", 3),
      LayerDesc::conv("conv3_1", 64, 3), LayerDesc::conv("conv3_2", 64, 3),
      LayerDesc::maxpool("pool3", 2),
      LayerDesc::conv("conv4_1", 128, 3), LayerDesc::conv("conv4_2", 128, 3),
      LayerDesc::maxpool("pool4", 2),
      LayerDesc::flatten(),
      LayerDesc::dense("dense1", 128, Activation::relu),
      LayerDesc::dropout("dropout", 0.2),
      LayerDesc::dense("dense2", 2, Activation::softmax),
  };
  return spec;
}

/// One resolved layer: its descriptor plus input/output shapes and, for
/// parameterized layers, the parameter tensor shapes.
struct LayerPlan {
  LayerDesc desc;
  Shape in_shape;
  Shape out_shape;
  std::vector<std::pair<std::string, Shape>> params;  // e.g. conv1_1.kernel, conv1_1.bias
  long long param_count = 0;
};

/// Walks the stack applying out = in - k + 1 (conv) and
/// out = floor((in - p)/p) + 1 (pool), resolving every shape.
inline std::vector<LayerPlan> plan_layers(const ModelSpec& spec) {
  if (spec.layers.empty()) throw ArchitectureError("model has no layers");
  std::vector<LayerPlan> plans;
  plans.reserve(spec.layers.size());
  Shape cur{spec.input_h, spec.input_w, spec.input_c};
  for (const LayerDesc& d : spec.layers) {
    LayerPlan p;
    p.desc = d;
    p.in_shape = cur;
    switch (d.kind) {
      case LayerKind::conv: {
        if (cur.rank() != 3)
          throw ArchitectureError("conv layer " + d.name + " needs an [H,W,C] input");
        if (cur[0] < d.kernel_h || cur[1] < d.kernel_w)
          throw ArchitectureError("layer " + d.name + ": input " + cur.str() +
                                  " smaller than kernel " + std::to_string(d.kernel_h) + "x" +
                                  std::to_string(d.kernel_w));
        const Index cin = cur[2];
        p.out_shape = Shape{cur[0] - d.kernel_h + 1, cur[1] - d.kernel_w + 1, d.filters};
        p.params = {{d.name + ".kernel", Shape{d.kernel_h, d.kernel_w, cin, d.filters}},
                    {d.name + ".bias", Shape{d.filters}}};
        p.param_count = (d.kernel_h * d.kernel_w * cin + 1) * d.filters;
        break;
      }
      case LayerKind::maxpool: {
        if (cur.rank() != 3)
          throw ArchitectureError("pool layer " + d.name + " needs an [H,W,C] input");
        if (cur[0] < d.pool || cur[1] < d.pool)
          throw ArchitectureError("layer " + d.name + ": input " + cur.str() +
                                  " smaller than pool " + std::to_string(d.pool));
        p.out_shape = Shape{(cur[0] - d.pool) / d.pool + 1, (cur[1] - d.pool) / d.pool + 1, cur[2]};
        break;
      }
      case LayerKind::flatten: {
        if (cur.rank() != 3)
          throw ArchitectureError("flatten needs an [H,W,C] input, got " + cur.str());
        p.out_shape = Shape{cur.count()};
        break;
      }
      case LayerKind::dense: {
        if (cur.rank() != 1)
          throw ArchitectureError("dense layer " + d.name + " needs a flat input, got " + cur.str());
        p.out_shape = Shape{d.units};
        p.params = {{d.name + ".weights", Shape{cur[0], d.units}},
                    {d.name + ".bias", Shape{d.units}}};
        p.param_count = (cur[0] + 1) * d.units;
        break;
      }
      case LayerKind::dropout: {
        p.out_shape = cur;
        break;
      }
    }
    cur = p.out_shape;
    plans.push_back(std::move(p));
  }
  return plans;
}

struct ShapeTraceRow {
  std::string name;
  Shape out_shape;
  long long param_count = 0;
};

inline std::vector<ShapeTraceRow> shape_trace(const ModelSpec& spec) {
  std::vector<ShapeTraceRow> rows;
  for (const LayerPlan& p : plan_layers(spec))
    rows.push_back({p.desc.name, p.out_shape, p.param_count});
  return rows;
}

struct ParamCountReport {
  std::vector<std::pair<std::string, long long>> per_layer;  // parameterized layers only
  long long total = 0;
  long long bytes(int bytes_per_param = 4) const { return total * bytes_per_param; }
};

inline ParamCountReport count_params(const ModelSpec& spec) {
  ParamCountReport r;
  for (const LayerPlan& p : plan_layers(spec)) {
    if (p.param_count == 0) continue;
    r.per_layer.emplace_back(p.desc.name, p.param_count);
    r.total += p.param_count;
  }
  return r;
}

/// Ordered, named trainable tensors (kernel+bias per conv, weights+bias per
/// dense), in layer order.
template <typename Scalar>
struct ModelParams {
  std::vector<std::string> names;
  std::vector<Tensor<Scalar>> tensors;

  Index find(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<Index>(i);
    return -1;
  }
  long long scalar_count() const {
    long long n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }
  template <typename S2>
  ModelParams<S2> cast() const {
    ModelParams<S2> out;
    out.names = names;
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<S2>());
    return out;
  }
};

/// Glorot-uniform kernels/weights (limit sqrt(6/(fan_in+fan_out)); conv fans
/// use kh*kw*cin and kh*kw*cout), zero biases. Bit-reproducible per seed.
template <typename Scalar>
ModelParams<Scalar> init_params(const ModelSpec& spec, uint64_t seed) {
  ModelParams<Scalar> params;
  const auto plans = plan_layers(spec);
  for (size_t li = 0; li < plans.size(); ++li) {
    const LayerPlan& p = plans[li];
    if (p.params.empty()) continue;
    const Shape& ws = p.params[0].second;
    double fan_in, fan_out;
    if (p.desc.kind == LayerKind::conv) {
      fan_in = static_cast<double>(ws[0] * ws[1] * ws[2]);
      fan_out = static_cast<double>(ws[0] * ws[1] * ws[3]);
    } else {
      fan_in = static_cast<double>(ws[0]);
      fan_out = static_cast<double>(ws[1]);
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));

    RngStream stream = RngStream::from(seed, {kTagInit, static_cast<uint64_t>(li)});
    Tensor<Scalar> w(ws);
    for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<Scalar>(stream.uniform(-limit, limit));
    params.names.push_back(p.params[0].first);
    params.tensors.push_back(std::move(w));

    params.names.push_back(p.params[1].first);
    params.tensors.emplace_back(p.params[1].second, Scalar(0));  // biases start at zero
  }
  return params;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <typename Scalar>
struct LayerCache {
  Tensor<Scalar> input;           // layer input (conv/dense)
  Tensor<Scalar> preact;          // pre-activation output (for ReLU backward)
  MaxPoolResult<Scalar> pool;     // maxpool layers
  DropoutResult<Scalar> dropout;  // dropout layers
  Shape in_shape;                 // flatten layers
};

template <typename Scalar>
struct SampleCache {
  std::vector<LayerCache<Scalar>> layers;
};

template <typename Scalar>
struct ForwardResult {
  Tensor<Scalar> probs;                      // [N, classes]
  std::vector<SampleCache<Scalar>> caches;   // per sample; empty unless cached
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> batch_row(const Tensor<Scalar>& batch, Index n) {
  const Shape& s = batch.shape();
  Tensor<Scalar> x(Shape{s[1], s[2], s[3]});
  const Index stride = s[1] * s[2] * s[3];
  x.array() = batch.array().segment(n * stride, stride);
  return x;
}

// Runs one sample through the stack. cache may be null (inference).
template <typename Scalar>
Tensor<Scalar> forward_sample(const ModelParams<Scalar>& params, const ModelSpec& spec,
                              Tensor<Scalar> x, RunMode mode, RngStream sample_rng,
                              SampleCache<Scalar>* cache) {
  if (cache) cache->layers.resize(spec.layers.size());
  size_t pi = 0;  // parameter cursor; conv/dense consume two tensors each
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerDesc& d = spec.layers[li];
    LayerCache<Scalar>* lc = cache ? &cache->layers[li] : nullptr;
    switch (d.kind) {
      case LayerKind::conv: {
        ConvLayer<Scalar> layer{params.tensors[pi], params.tensors[pi + 1]};
        pi += 2;
        Tensor<Scalar> y = conv2d_forward(x, layer);
        if (lc) {
          lc->input = std::move(x);
          lc->preact = y;
        }
        x = d.act == Activation::relu ? relu_forward(y) : std::move(y);
        break;
      }
      case LayerKind::maxpool: {
        auto r = maxpool_forward(x, MaxPoolSpec{d.pool, d.pool});
        x = r.output;
        if (lc) lc->pool = std::move(r);
        break;
      }
      case LayerKind::flatten: {
        if (lc) lc->in_shape = x.shape();
        x = flatten_hwc(x);
        break;
      }
      case LayerKind::dense: {
        DenseLayer<Scalar> layer{params.tensors[pi], params.tensors[pi + 1]};
        pi += 2;
        Tensor<Scalar> y = dense_forward(x, layer);
        if (lc) {
          lc->input = std::move(x);
          lc->preact = y;
        }
        if (d.act == Activation::relu)
          x = relu_forward(y);
        else if (d.act == Activation::softmax)
          x = softmax(y);
        else
          x = std::move(y);
        break;
      }
      case LayerKind::dropout: {
        DropoutSpec ds{d.rate, mode == RunMode::train ? DropoutMode::train : DropoutMode::infer};
        auto r = dropout_forward(x, ds, sample_rng);
        x = r.output;
        if (lc) lc->dropout = std::move(r);
        break;
      }
    }
  }
  return x;
}

}  // namespace detail

/// Batch forward pass. Train mode activates dropout; each sample's
/// stochasticity comes from rng.substream(row), so results do not depend on
/// execution order. Caches are recorded when `cached` (default: train mode).
template <typename Scalar>
ForwardResult<Scalar> model_forward(const ModelParams<Scalar>& params, const ModelSpec& spec,
                                    const Tensor<Scalar>& batch, RunMode mode, RngStream rng,
                                    bool cached, int threads = 1);

/// Parameter gradients for a batch, summed over samples in ascending sample
/// order (schedule-independent). d_logits is the fused loss gradient.
template <typename Scalar>
ModelParams<Scalar> model_backward(const ModelParams<Scalar>& params, const ModelSpec& spec,
                                   const ForwardResult<Scalar>& fwd, const Tensor<Scalar>& d_logits,
                                   int threads = 1);

}  // namespace lpn

#include "lpn/parallel.hpp"

namespace lpn {

template <typename Scalar>
ForwardResult<Scalar> model_forward(const ModelParams<Scalar>& params, const ModelSpec& spec,
                                    const Tensor<Scalar>& batch, RunMode mode, RngStream rng,
                                    bool cached, int threads) {
  if (batch.rank() != 4 || batch.shape()[1] != spec.input_h || batch.shape()[2] != spec.input_w ||
      batch.shape()[3] != spec.input_c)
    throw ShapeError("model_forward: batch " + batch.shape().str() + " != [N," +
                     std::to_string(spec.input_h) + "," + std::to_string(spec.input_w) + "," +
                     std::to_string(spec.input_c) + "]");
  const Index N = batch.shape()[0];
  const LayerDesc& last = spec.layers.back();
  const Index K = last.units;

  ForwardResult<Scalar> result;
  result.probs = Tensor<Scalar>(Shape{N, K});
  if (cached) result.caches.resize(static_cast<size_t>(N));

  parallel_for(N, threads, [&](Index n) {
    SampleCache<Scalar>* cache = cached ? &result.caches[static_cast<size_t>(n)] : nullptr;
    Tensor<Scalar> out =
        detail::forward_sample(params, spec, detail::batch_row(batch, n), mode,
                               rng.substream(static_cast<uint64_t>(n)), cache);
    for (Index k = 0; k < K; ++k) result.probs.at(n, k) = out[k];
  });
  return result;
}

template <typename Scalar>
ModelParams<Scalar> model_backward(const ModelParams<Scalar>& params, const ModelSpec& spec,
                                   const ForwardResult<Scalar>& fwd, const Tensor<Scalar>& d_logits,
                                   int threads) {
  const Index N = d_logits.rank() == 2 ? d_logits.shape()[0] : -1;
  if (N < 0) throw ShapeError("model_backward: d_logits must be [N,K]");
  if (fwd.caches.size() != static_cast<size_t>(N))
    throw StateError("model_backward: forward cache missing or batch size mismatch (run forward with caching)");

  // Per-sample gradients first, then a fixed-order reduction.
  std::vector<std::vector<Tensor<Scalar>>> per_sample(static_cast<size_t>(N));
  parallel_for(N, threads, [&](Index n) {
    const SampleCache<Scalar>& cache = fwd.caches[static_cast<size_t>(n)];
    if (cache.layers.size() != spec.layers.size())
      throw StateError("model_backward: stale cache for sample " + std::to_string(n));

    std::vector<Tensor<Scalar>> grads(params.tensors.size());
    Tensor<Scalar> d(Shape{d_logits.shape()[1]});
    for (Index k = 0; k < d_logits.shape()[1]; ++k) d[k] = d_logits.at(n, k);

    size_t pi = params.tensors.size();
    for (size_t li = spec.layers.size(); li-- > 0;) {
      const LayerDesc& desc = spec.layers[li];
      const LayerCache<Scalar>& lc = cache.layers[li];
      switch (desc.kind) {
        case LayerKind::conv: {
          pi -= 2;
          if (desc.act == Activation::relu) d = relu_backward(lc.preact, d);
          ConvLayer<Scalar> layer{params.tensors[pi], params.tensors[pi + 1]};
          auto lg = conv2d_backward(lc.input, layer, d);
          grads[pi] = std::move(lg.d_params[0]);
          grads[pi + 1] = std::move(lg.d_params[1]);
          d = std::move(lg.d_input);
          break;
        }
        case LayerKind::maxpool:
          d = maxpool_backward(lc.pool, d);
          break;
        case LayerKind::flatten:
          d = reshape(d, lc.in_shape);
          break;
        case LayerKind::dense: {
          pi -= 2;
          if (desc.act == Activation::relu) d = relu_backward(lc.preact, d);
          // softmax head: d already holds the fused d_logits
          DenseLayer<Scalar> layer{params.tensors[pi], params.tensors[pi + 1]};
          auto lg = dense_backward(lc.input, layer, d);
          grads[pi] = std::move(lg.d_params[0]);
          grads[pi + 1] = std::move(lg.d_params[1]);
          d = std::move(lg.d_input);
          break;
        }
        case LayerKind::dropout:
          d = dropout_backward(lc.dropout, d);
          break;
      }
    }
    per_sample[static_cast<size_t>(n)] = std::move(grads);
  });

  ModelParams<Scalar> total;
  total.names = params.names;
  for (const auto& t : params.tensors) total.tensors.emplace_back(t.shape());
  for (Index n = 0; n < N; ++n)  // ascending reduction order
    for (size_t i = 0; i < total.tensors.size(); ++i)
      total.tensors[i].array() += per_sample[static_cast<size_t>(n)][i].array();
  return total;
}

}  // namespace lpn
