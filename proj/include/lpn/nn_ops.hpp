// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "lpn/rng.hpp"
#include "lpn/tensor.hpp"

// Layer kernels for the model: valid-padding 2D convolution (cross-
// correlation, stride 1), non-overlapping max pooling, dense, ReLU, softmax,
// inverted dropout. Forward and backward for each.
//
// Convolution and pooling are written as plain loops with a pinned
// accumulation order (window scanned row-major, channels ascending, outputs
// ascending) so results are reproducible and equal to a naive nested-loop
// evaluation bit for bit in a given precision. Do not replace these loops
// with a BLAS path without preserving the summation order.

namespace lpn {

template <typename Scalar>
struct ConvLayer {
  Tensor<Scalar> kernel;  // [kh, kw, cin, cout]
  Tensor<Scalar> bias;    // [cout]
};

struct MaxPoolSpec {
  Index pool_h = 2;
  Index pool_w = 2;
  // stride == pool size; trailing rows/cols without a full window are dropped
};

template <typename Scalar>
struct DenseLayer {
  Tensor<Scalar> weights;  // [n_in, n_out]
  Tensor<Scalar> bias;     // [n_out]
};

enum class DropoutMode { train, infer };

struct DropoutSpec {
  double rate = 0.2;  // in [0,1)
  DropoutMode mode = DropoutMode::train;
};

template <typename Scalar>
struct LayerGradients {
  Tensor<Scalar> d_input;
  std::vector<Tensor<Scalar>> d_params;  // same shapes as the layer's parameters
};

namespace detail {

template <typename Scalar>
void check_conv_shapes(const Tensor<Scalar>& x, const ConvLayer<Scalar>& layer) {
  if (x.rank() != 3) throw ShapeError("conv2d: input must be [H,W,C], got " + x.shape().str());
  if (layer.kernel.rank() != 4)
    throw ShapeError("conv2d: kernel must be [kh,kw,cin,cout], got " + layer.kernel.shape().str());
  const Shape& ks = layer.kernel.shape();
  if (layer.bias.rank() != 1 || layer.bias.size() != ks[3])
    throw ShapeError("conv2d: bias length must equal cout");
  if (x.shape()[2] != ks[2])
    throw ShapeError("conv2d: input channels " + std::to_string(x.shape()[2]) +
                     " != kernel cin " + std::to_string(ks[2]));
  if (x.shape()[0] < ks[0] || x.shape()[1] < ks[1])
    throw ShapeError("conv2d: input " + x.shape().str() + " smaller than kernel " + ks.str());
}

}  // namespace detail

/// out[i,j,o] = bias[o] + sum_{a,b,c} x[i+a, j+b, c] * kernel[a,b,c,o].
/// Valid padding, stride 1. Accumulation order per output: a, b, c ascending.
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& x, const ConvLayer<Scalar>& layer) {
  detail::check_conv_shapes(x, layer);
  const Index H = x.shape()[0], W = x.shape()[1], Ci = x.shape()[2];
  const Index kh = layer.kernel.shape()[0], kw = layer.kernel.shape()[1];
  const Index Co = layer.kernel.shape()[3];
  const Index OH = H - kh + 1, OW = W - kw + 1;

  Tensor<Scalar> out(Shape{OH, OW, Co});
  const Scalar* xd = x.data();
  const Scalar* kd = layer.kernel.data();
  const Scalar* bd = layer.bias.data();
  Scalar* od = out.data();

  for (Index i = 0; i < OH; ++i) {
    for (Index j = 0; j < OW; ++j) {
      Scalar* op = od + (i * OW + j) * Co;
      for (Index o = 0; o < Co; ++o) op[o] = bd[o];
      for (Index a = 0; a < kh; ++a) {
        const Scalar* xrow = xd + ((i + a) * W + j) * Ci;
        const Scalar* krow = kd + a * kw * Ci * Co;
        for (Index b = 0; b < kw; ++b) {
          const Scalar* xp = xrow + b * Ci;
          const Scalar* kp = krow + b * Ci * Co;
          for (Index c = 0; c < Ci; ++c) {
            const Scalar xv = xp[c];
            const Scalar* kc = kp + c * Co;
            for (Index o = 0; o < Co; ++o) op[o] += xv * kc[o];
          }
        }
      }
    }
  }
  return out;
}

/// Exact adjoint of conv2d_forward. d_params = {d_kernel, d_bias}.
/// Every accumulator receives its contributions in the forward scan order
/// (output positions row-major, then o ascending), keeping the pass
/// deterministic and loop-oracle-exact.
template <typename Scalar>
LayerGradients<Scalar> conv2d_backward(const Tensor<Scalar>& x, const ConvLayer<Scalar>& layer,
                                       const Tensor<Scalar>& d_out) {
  detail::check_conv_shapes(x, layer);
  const Index H = x.shape()[0], W = x.shape()[1], Ci = x.shape()[2];
  const Index kh = layer.kernel.shape()[0], kw = layer.kernel.shape()[1];
  const Index Co = layer.kernel.shape()[3];
  const Index OH = H - kh + 1, OW = W - kw + 1;
  if (d_out.shape() != Shape{OH, OW, Co})
    throw ShapeError("conv2d_backward: d_out shape " + d_out.shape().str() + " != expected " +
                     Shape{OH, OW, Co}.str());

  LayerGradients<Scalar> g;
  g.d_input = Tensor<Scalar>(x.shape());
  g.d_params = {Tensor<Scalar>(layer.kernel.shape()), Tensor<Scalar>(layer.bias.shape())};
  Tensor<Scalar>& d_kernel = g.d_params[0];
  Tensor<Scalar>& d_bias = g.d_params[1];

  const Scalar* xd = x.data();
  const Scalar* kd = layer.kernel.data();
  const Scalar* dod = d_out.data();
  Scalar* dxd = g.d_input.data();
  Scalar* dkd = d_kernel.data();
  Scalar* dbd = d_bias.data();

  for (Index i = 0; i < OH; ++i) {
    for (Index j = 0; j < OW; ++j) {
      const Scalar* dop = dod + (i * OW + j) * Co;
      for (Index o = 0; o < Co; ++o) dbd[o] += dop[o];
      for (Index a = 0; a < kh; ++a) {
        for (Index b = 0; b < kw; ++b) {
          const Index xoff = ((i + a) * W + (j + b)) * Ci;
          const Index koff = (a * kw + b) * Ci * Co;
          // each accumulator still receives its adds in (i, j, o) order, the
          // order a naive nested-loop adjoint produces
          for (Index c = 0; c < Ci; ++c) {
            const Scalar xv = xd[xoff + c];
            Scalar* dkc = dkd + koff + c * Co;
            for (Index o = 0; o < Co; ++o) dkc[o] += xv * dop[o];
          }
          Scalar* dxp = dxd + xoff;
          for (Index o = 0; o < Co; ++o) {
            const Scalar go = dop[o];
            const Scalar* ko = kd + koff + o;
            for (Index c = 0; c < Ci; ++c) dxp[c] += ko[c * Co] * go;
          }
        }
      }
    }
  }
  return g;
}

template <typename Scalar>
struct MaxPoolResult {
  Tensor<Scalar> output;       // [floor((H-p)/p)+1, floor((W-p)/p)+1, C]
  std::vector<Index> argmax;   // flat input index of each window winner
  Shape input_shape;
};

/// Max over non-overlapping pool_h x pool_w windows. Ties go to the smallest
/// row-major input index.
template <typename Scalar>
MaxPoolResult<Scalar> maxpool_forward(const Tensor<Scalar>& x, const MaxPoolSpec& spec) {
  if (x.rank() != 3) throw ShapeError("maxpool: input must be [H,W,C], got " + x.shape().str());
  const Index H = x.shape()[0], W = x.shape()[1], C = x.shape()[2];
  const Index ph = spec.pool_h, pw = spec.pool_w;
  if (ph < 1 || pw < 1) throw ShapeError("maxpool: pool size must be >= 1");
  if (H < ph || W < pw)
    throw ShapeError("maxpool: input " + x.shape().str() + " smaller than pool window");
  const Index OH = (H - ph) / ph + 1, OW = (W - pw) / pw + 1;

  MaxPoolResult<Scalar> r;
  r.output = Tensor<Scalar>(Shape{OH, OW, C});
  r.argmax.resize(static_cast<size_t>(OH * OW * C));
  r.input_shape = x.shape();

  const Scalar* xd = x.data();
  Scalar* od = r.output.data();
  for (Index i = 0; i < OH; ++i) {
    for (Index j = 0; j < OW; ++j) {
      for (Index c = 0; c < C; ++c) {
        Index best_idx = ((i * ph) * W + (j * pw)) * C + c;
        Scalar best = xd[best_idx];
        for (Index a = 0; a < ph; ++a) {
          for (Index b = 0; b < pw; ++b) {
            const Index idx = ((i * ph + a) * W + (j * pw + b)) * C + c;
            if (xd[idx] > best) {  // strict: first winner kept on ties
              best = xd[idx];
              best_idx = idx;
            }
          }
        }
        const Index out_idx = (i * OW + j) * C + c;
        od[out_idx] = best;
        r.argmax[static_cast<size_t>(out_idx)] = best_idx;
      }
    }
  }
  return r;
}

/// Routes each d_out value to its recorded argmax position; zero elsewhere.
template <typename Scalar>
Tensor<Scalar> maxpool_backward(const MaxPoolResult<Scalar>& fwd, const Tensor<Scalar>& d_out) {
  if (d_out.shape() != fwd.output.shape())
    throw ShapeError("maxpool_backward: d_out shape " + d_out.shape().str() +
                     " != forward output " + fwd.output.shape().str());
  Tensor<Scalar> d_input(fwd.input_shape);
  const Scalar* dod = d_out.data();
  Scalar* dxd = d_input.data();
  for (Index k = 0; k < d_out.size(); ++k) dxd[fwd.argmax[static_cast<size_t>(k)]] += dod[k];
  return d_input;
}

namespace detail {

template <typename Scalar>
void check_dense_shapes(const Tensor<Scalar>& x, const DenseLayer<Scalar>& layer) {
  if (x.rank() != 1) throw ShapeError("dense: input must be rank-1, got " + x.shape().str());
  if (layer.weights.rank() != 2)
    throw ShapeError("dense: weights must be [n_in,n_out], got " + layer.weights.shape().str());
  if (x.size() != layer.weights.shape()[0])
    throw ShapeError("dense: input length " + std::to_string(x.size()) + " != n_in " +
                     std::to_string(layer.weights.shape()[0]));
  if (layer.bias.rank() != 1 || layer.bias.size() != layer.weights.shape()[1])
    throw ShapeError("dense: bias length must equal n_out");
}

template <typename Scalar>
using MatMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename Scalar>
using MutMatMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename Scalar>
using VecMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
template <typename Scalar>
using MutVecMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

}  // namespace detail

/// y[j] = bias[j] + sum_i x[i] * W[i,j]
template <typename Scalar>
Tensor<Scalar> dense_forward(const Tensor<Scalar>& x, const DenseLayer<Scalar>& layer) {
  detail::check_dense_shapes(x, layer);
  const Index n_in = layer.weights.shape()[0], n_out = layer.weights.shape()[1];
  Tensor<Scalar> y(Shape{n_out});
  detail::MatMap<Scalar> W(layer.weights.data(), n_in, n_out);
  detail::VecMap<Scalar> xv(x.data(), n_in), bv(layer.bias.data(), n_out);
  detail::MutVecMap<Scalar>(y.data(), n_out) = W.transpose() * xv + bv;
  return y;
}

/// d_W = x d_out^T, d_b = d_out, d_x = W d_out. d_params = {d_W, d_b}.
template <typename Scalar>
LayerGradients<Scalar> dense_backward(const Tensor<Scalar>& x, const DenseLayer<Scalar>& layer,
                                      const Tensor<Scalar>& d_out) {
  detail::check_dense_shapes(x, layer);
  const Index n_in = layer.weights.shape()[0], n_out = layer.weights.shape()[1];
  if (d_out.rank() != 1 || d_out.size() != n_out)
    throw ShapeError("dense_backward: d_out length must equal n_out");

  LayerGradients<Scalar> g;
  g.d_input = Tensor<Scalar>(x.shape());
  g.d_params = {Tensor<Scalar>(layer.weights.shape()), layer.bias};
  g.d_params[1].array() = d_out.array();

  detail::MatMap<Scalar> W(layer.weights.data(), n_in, n_out);
  detail::VecMap<Scalar> xv(x.data(), n_in), dov(d_out.data(), n_out);
  detail::MutMatMap<Scalar>(g.d_params[0].data(), n_in, n_out) = xv * dov.transpose();
  detail::MutVecMap<Scalar>(g.d_input.data(), n_in) = W * dov;
  return g;
}

template <typename Scalar>
Tensor<Scalar> relu_forward(const Tensor<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  out.array() = x.array().max(Scalar(0));
  return out;
}

/// d_out where x > 0, else 0. The derivative at exactly 0 is 0.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& d_out) {
  if (x.shape() != d_out.shape())
    throw ShapeError("relu_backward: shape mismatch " + x.shape().str() + " vs " +
                     d_out.shape().str());
  Tensor<Scalar> out(x.shape());
  out.array() = (x.array() > Scalar(0)).select(d_out.array(), Scalar(0));
  return out;
}

/// Numerically stable softmax over a rank-1 tensor: shifts by max(z) before
/// exponentiating, so |z| up to ~1e4 cannot overflow.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& z) {
  if (z.rank() != 1 || z.size() < 1) throw ShapeError("softmax: expects a non-empty vector");
  if (!z.all_finite()) throw NumericError("softmax: non-finite logit");
  Tensor<Scalar> p(z.shape());
  const Scalar zmax = z.array().maxCoeff();
  p.array() = (z.array() - zmax).exp();
  p.array() /= p.array().sum();
  return p;
}

template <typename Scalar>
struct DropoutResult {
  Tensor<Scalar> output;
  std::vector<uint8_t> mask;  // 1 = kept
  Scalar scale = 1;           // 1/(1-rate) in train mode
};

/// Inverted dropout: each element kept with probability 1-rate and scaled by
/// 1/(1-rate), so inference is the identity. Consumes one draw per element in
/// train mode regardless of rate.
template <typename Scalar>
DropoutResult<Scalar> dropout_forward(const Tensor<Scalar>& x, const DropoutSpec& spec,
                                      RngStream& rng) {
  if (spec.rate < 0.0 || spec.rate >= 1.0)
    throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(spec.rate));
  DropoutResult<Scalar> r;
  r.output = Tensor<Scalar>(x.shape());
  r.mask.assign(static_cast<size_t>(x.size()), 1);
  if (spec.mode == DropoutMode::infer) {
    r.output.array() = x.array();
    return r;
  }
  r.scale = Scalar(1.0 / (1.0 - spec.rate));
  const Scalar* xd = x.data();
  Scalar* od = r.output.data();
  for (Index i = 0; i < x.size(); ++i) {
    const bool keep = rng.next_double() >= spec.rate;
    r.mask[static_cast<size_t>(i)] = keep ? 1 : 0;
    od[i] = keep ? xd[i] * r.scale : Scalar(0);
  }
  return r;
}

/// Backward reuses the forward mask and scale.
template <typename Scalar>
Tensor<Scalar> dropout_backward(const DropoutResult<Scalar>& fwd, const Tensor<Scalar>& d_out) {
  if (d_out.size() != static_cast<Index>(fwd.mask.size()) || d_out.shape() != fwd.output.shape())
    throw ShapeError("dropout_backward: d_out shape mismatch");
  Tensor<Scalar> d_input(d_out.shape());
  const Scalar* dod = d_out.data();
  Scalar* dxd = d_input.data();
  for (Index i = 0; i < d_out.size(); ++i)
    dxd[i] = fwd.mask[static_cast<size_t>(i)] ? dod[i] * fwd.scale : Scalar(0);
  return d_input;
}

}  // namespace lpn
