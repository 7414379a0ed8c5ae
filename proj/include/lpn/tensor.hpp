// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lpn/errors.hpp"

namespace lpn {

using Index = Eigen::Index;

/// Dimension list of a dense tensor. Rank 1..4 (vectors, matrices, HWC
/// images, NHWC batches), every dim >= 1.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Index> dims) : dims_(dims) { validate(); }
  explicit Shape(std::vector<Index> dims) : dims_(std::move(dims)) { validate(); }

  int rank() const { return static_cast<int>(dims_.size()); }
  Index operator[](int i) const { return dims_[static_cast<size_t>(i)]; }

  Index count() const {
    Index n = 1;
    for (Index d : dims_) n *= d;
    return n;
  }

  bool operator==(const Shape& o) const { return dims_ == o.dims_; }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
    os << ']';
    return os.str();
  }

  const std::vector<Index>& dims() const { return dims_; }

 private:
  void validate() const {
    if (dims_.empty() || dims_.size() > 4)
      throw ShapeError("shape rank must be 1..4, got " + std::to_string(dims_.size()));
    for (Index d : dims_)
      if (d < 1) throw ShapeError("shape dims must be >= 1, got " + str_unchecked());
  }
  std::string str_unchecked() const {
    std::ostringstream os;
    for (Index d : dims_) os << d << ' ';
    return os.str();
  }

  std::vector<Index> dims_;
};

/// Dense N-d array, row-major (channel-last for images). Thin shape wrapper
/// over an Eigen array so elementwise work stays expression-based.
///
/// Scalar is float for training and double for the verification harnesses;
/// both instantiations share every code path.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;

  explicit Tensor(const Shape& shape, Scalar fill = Scalar(0))
      : shape_(shape), data_(Array::Constant(shape.count(), fill)) {}

  static Tensor from_values(const Shape& shape, std::vector<Scalar> values) {
    if (static_cast<Index>(values.size()) != shape.count())
      throw ShapeError("value count " + std::to_string(values.size()) +
                       " does not match shape " + shape.str());
    Tensor t;
    t.shape_ = shape;
    t.data_ = Eigen::Map<const Array>(values.data(), static_cast<Index>(values.size()));
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  // Rank-checked row-major indexers.
  Scalar& at(Index i, Index j) { return data_[index2(i, j)]; }
  Scalar at(Index i, Index j) const { return data_[index2(i, j)]; }
  Scalar& at(Index h, Index w, Index c) { return data_[index3(h, w, c)]; }
  Scalar at(Index h, Index w, Index c) const { return data_[index3(h, w, c)]; }
  Scalar& at(Index n, Index h, Index w, Index c) { return data_[index4(n, h, w, c)]; }
  Scalar at(Index n, Index h, Index w, Index c) const { return data_[index4(n, h, w, c)]; }

  template <typename S2>
  Tensor<S2> cast() const {
    Tensor<S2> out(shape_);
    out.array() = data_.template cast<S2>();
    return out;
  }

  bool all_finite() const { return data_.isFinite().all(); }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && (data_ == o.data_).all();
  }

 private:
  Index index2(Index i, Index j) const {
    require_rank(2);
    return i * shape_[1] + j;
  }
  Index index3(Index h, Index w, Index c) const {
    require_rank(3);
    return (h * shape_[1] + w) * shape_[2] + c;
  }
  Index index4(Index n, Index h, Index w, Index c) const {
    require_rank(4);
    return ((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c;
  }
  void require_rank(int r) const {
    if (shape_.rank() != r)
      throw ShapeError("rank-" + std::to_string(r) + " access on tensor of shape " + shape_.str());
  }

  Shape shape_;
  Array data_;
};

/// Same data sequence under a new shape; element counts must agree.
template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& t, const Shape& dims) {
  if (dims.count() != t.size())
    throw ShapeError("reshape " + t.shape().str() + " -> " + dims.str() +
                     ": element count mismatch");
  Tensor<Scalar> out(dims);
  out.array() = t.array();
  return out;
}

/// [H,W,C] -> [H*W*C] with index (h*W + w)*C + c. Row-major channel-last, so
/// this is a reshape; the dense head's weight layout depends on this order.
template <typename Scalar>
Tensor<Scalar> flatten_hwc(const Tensor<Scalar>& t) {
  if (t.rank() != 3)
    throw ShapeError("flatten_hwc expects rank-3 input, got " + t.shape().str());
  return reshape(t, Shape{t.size()});
}

}  // namespace lpn
