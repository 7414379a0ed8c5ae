// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "lpn/image.hpp"
#include "lpn/rng.hpp"
#include "lpn/tensor.hpp"

// Dataset discovery over the Kermany directory layout plus the image
// pipeline: decode -> grayscale -> resize -> [affine augmentation] ->
// rescale -> [H,W,1]. Augmentation applies only to training batches.

namespace lpn {

enum class Split { train, test, val };

std::string split_name(Split s);

struct ImageRecord {
  std::string path;
  int label = 0;  // 0 NORMAL, 1 PNEUMONIA
};

struct DatasetManifest {
  Split split = Split::train;
  std::vector<ImageRecord> records;          // lexicographic by relative path
  std::array<Index, 2> class_counts = {0, 0};
};

/// Scans root/<split>/{NORMAL,PNEUMONIA}/ for image files. Missing subfolder
/// raises DatasetError; so does an empty dataset.
DatasetManifest load_manifest(const std::string& root_dir, Split split);

struct PreprocessConfig {
  Index target_h = 224;
  Index target_w = 224;
  // rescale 1/255 and BT.601 luma weights are fixed for the reference pipeline
};

struct AugmentationConfig {
  double rotation_range = 12.0;  // degrees
  double zoom_range = 0.15;      // zoom factors drawn from [1-z, 1+z]
  double width_shift = 0.15;     // fraction of width
  double height_shift = 0.15;    // fraction of height
  double shear_range = 0.15;
  bool shear_in_degrees = true;  // false: shear_range is in radians
  bool horizontal_flip = false;  // fixed false for the reference model
};

/// One concrete sampled transform. Angles in degrees, shifts in pixels.
struct AffineParams {
  double theta = 0;          // rotation
  double zoom_x = 1, zoom_y = 1;
  double shift_x = 0, shift_y = 0;
  double shear = 0;
};

/// BT.601 luma: y = 0.299 R + 0.587 G + 0.114 B. Single-channel input passes
/// through unchanged.
template <typename Scalar>
Tensor<Scalar> to_grayscale(const Tensor<Scalar>& img) {
  if (img.rank() != 3) throw ShapeError("to_grayscale: expects [H,W,C], got " + img.shape().str());
  const Index C = img.shape()[2];
  if (C == 1) return img;
  if (C != 3) throw ShapeError("to_grayscale: channel count must be 1 or 3, got " + std::to_string(C));
  const Index H = img.shape()[0], W = img.shape()[1];
  Tensor<Scalar> out(Shape{H, W, 1});
  const Scalar* src = img.data();
  Scalar* dst = out.data();
  for (Index i = 0; i < H * W; ++i)
    dst[i] = static_cast<Scalar>(0.299) * src[3 * i] + static_cast<Scalar>(0.587) * src[3 * i + 1] +
             static_cast<Scalar>(0.114) * src[3 * i + 2];
  return out;
}

/// Bilinear resize with half-pixel centers: src = (dst + 0.5) * scale - 0.5,
/// clamped to the image. A same-size resize is the identity.
template <typename Scalar>
Tensor<Scalar> resize_bilinear(const Tensor<Scalar>& img, Index target_h, Index target_w) {
  if (img.rank() != 3) throw ShapeError("resize_bilinear: expects [H,W,C]");
  const Index H = img.shape()[0], W = img.shape()[1], C = img.shape()[2];
  Tensor<Scalar> out(Shape{target_h, target_w, C});
  const double sy = static_cast<double>(H) / static_cast<double>(target_h);
  const double sx = static_cast<double>(W) / static_cast<double>(target_w);
  for (Index y = 0; y < target_h; ++y) {
    double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(H - 1));
    const Index y0 = static_cast<Index>(fy);
    const Index y1 = std::min(y0 + 1, H - 1);
    const double wy = fy - static_cast<double>(y0);
    for (Index x = 0; x < target_w; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(W - 1));
      const Index x0 = static_cast<Index>(fx);
      const Index x1 = std::min(x0 + 1, W - 1);
      const double wx = fx - static_cast<double>(x0);
      for (Index c = 0; c < C; ++c) {
        const double top = (1.0 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        const double bot = (1.0 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        out.at(y, x, c) = static_cast<Scalar>((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

/// Pixel values 0..255 -> [0,1].
template <typename Scalar>
Tensor<Scalar> rescale(const Tensor<Scalar>& img) {
  Tensor<Scalar> out(img.shape());
  out.array() = img.array() / Scalar(255);
  return out;
}

/// Draws theta, zoom_x, zoom_y, shift_x, shift_y, shear (in that order) from
/// their configured ranges. Deterministic given the stream state; always
/// consumes six draws.
AffineParams sample_affine_params(const AugmentationConfig& cfg, Index width, Index height,
                                  RngStream& rng);

/// Applies rotation * shear * zoom about the image center plus translation.
/// Output pixels take the nearest source pixel of the inverse-mapped
/// coordinate; out-of-image coordinates clamp to the nearest edge pixel.
template <typename Scalar>
Tensor<Scalar> apply_affine(const Tensor<Scalar>& img, const AffineParams& p) {
  if (img.rank() != 3) throw ShapeError("apply_affine: expects [H,W,C]");
  const Index H = img.shape()[0], W = img.shape()[1], C = img.shape()[2];
  constexpr double deg = 3.14159265358979323846 / 180.0;
  const double th = p.theta * deg, sh = p.shear * deg;

  // forward map A = R(theta) * Shear(sh) * Zoom, applied about the center
  const double r00 = std::cos(th), r01 = -std::sin(th);
  const double r10 = std::sin(th), r11 = std::cos(th);
  const double s00 = 1.0, s01 = -std::sin(sh), s10 = 0.0, s11 = std::cos(sh);
  double a00 = (r00 * s00 + r01 * s10) * p.zoom_x, a01 = (r00 * s01 + r01 * s11) * p.zoom_y;
  double a10 = (r10 * s00 + r11 * s10) * p.zoom_x, a11 = (r10 * s01 + r11 * s11) * p.zoom_y;

  const double det = a00 * a11 - a01 * a10;
  if (std::abs(det) < 1e-12) throw InputError("apply_affine: singular transform");
  const double i00 = a11 / det, i01 = -a01 / det, i10 = -a10 / det, i11 = a00 / det;

  const double cx = static_cast<double>(W - 1) / 2.0, cy = static_cast<double>(H - 1) / 2.0;
  Tensor<Scalar> out(img.shape());
  for (Index y = 0; y < H; ++y) {
    for (Index x = 0; x < W; ++x) {
      const double qx = static_cast<double>(x) - cx - p.shift_x;
      const double qy = static_cast<double>(y) - cy - p.shift_y;
      const double sx = i00 * qx + i01 * qy + cx;
      const double sy = i10 * qx + i11 * qy + cy;
      Index xi = static_cast<Index>(std::llround(sx));
      Index yi = static_cast<Index>(std::llround(sy));
      xi = std::min(std::max(xi, Index(0)), W - 1);  // nearest fill = edge clamp
      yi = std::min(std::max(yi, Index(0)), H - 1);
      for (Index c = 0; c < C; ++c) out.at(y, x, c) = img.at(yi, xi, c);
    }
  }
  return out;
}

/// decode -> grayscale -> resize -> [affine] -> rescale, yielding [H,W,1]
/// values in [0,1]. `affine` is null outside training.
Tensor<float> preprocess_image(const Tensor<float>& raw, const PreprocessConfig& cfg,
                               const AffineParams* affine);

struct Batch {
  Tensor<float> images;  // [N, target_h, target_w, 1]
  Tensor<float> labels;  // [N, 2] one-hot
};

/// Assembles a batch from manifest records. When `augment` is set, each
/// sample's transform comes from rng.substream(record index), so results are
/// independent of assembly order and thread count.
Batch make_batch(const DatasetManifest& manifest, const std::vector<Index>& indices,
                 const std::optional<AugmentationConfig>& augment, const PreprocessConfig& cfg,
                 RngStream rng, int threads = 1);

}  // namespace lpn
