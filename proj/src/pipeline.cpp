// SPDX-License-Identifier: Apache-2.0
#include "lpn/pipeline.hpp"

#include <algorithm>
#include <filesystem>

#include "lpn/parallel.hpp"

namespace fs = std::filesystem;

namespace lpn {

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::val: return "val";
  }
  return "?";
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpeg" || ext == ".jpg" || ext == ".png" || ext == ".pgm";
}

}  // namespace

DatasetManifest load_manifest(const std::string& root_dir, Split split) {
  const fs::path split_dir = fs::path(root_dir) / split_name(split);
  if (!fs::is_directory(split_dir))
    throw DatasetError("missing split directory: " + split_dir.string());

  DatasetManifest m;
  m.split = split;
  const std::pair<const char*, int> classes[] = {{"NORMAL", 0}, {"PNEUMONIA", 1}};
  for (const auto& [cls, label] : classes) {
    const fs::path cls_dir = split_dir / cls;
    if (!fs::is_directory(cls_dir))
      throw DatasetError("missing class directory: " + cls_dir.string());
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(cls_dir)) {
      if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
      if (entry.path().filename().string().front() == '.') continue;
      files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    for (auto& f : files) {
      m.records.push_back({std::move(f), label});
      m.class_counts[static_cast<size_t>(label)] += 1;
    }
  }
  if (m.records.empty())
    throw DatasetError("no images found under " + split_dir.string());
  return m;
}

AffineParams sample_affine_params(const AugmentationConfig& cfg, Index width, Index height,
                                  RngStream& rng) {
  AffineParams p;
  p.theta = rng.uniform(-cfg.rotation_range, cfg.rotation_range);
  p.zoom_x = rng.uniform(1.0 - cfg.zoom_range, 1.0 + cfg.zoom_range);
  p.zoom_y = rng.uniform(1.0 - cfg.zoom_range, 1.0 + cfg.zoom_range);
  p.shift_x = rng.uniform(-cfg.width_shift, cfg.width_shift) * static_cast<double>(width);
  p.shift_y = rng.uniform(-cfg.height_shift, cfg.height_shift) * static_cast<double>(height);
  const double shear = rng.uniform(-cfg.shear_range, cfg.shear_range);
  p.shear = cfg.shear_in_degrees ? shear : shear * 180.0 / 3.14159265358979323846;
  return p;
}

Tensor<float> preprocess_image(const Tensor<float>& raw, const PreprocessConfig& cfg,
                               const AffineParams* affine) {
  Tensor<float> img = to_grayscale(raw);
  img = resize_bilinear(img, cfg.target_h, cfg.target_w);
  if (affine) img = apply_affine(img, *affine);
  return rescale(img);
}

Batch make_batch(const DatasetManifest& manifest, const std::vector<Index>& indices,
                 const std::optional<AugmentationConfig>& augment, const PreprocessConfig& cfg,
                 RngStream rng, int threads) {
  const Index N = static_cast<Index>(indices.size());
  Batch batch;
  batch.images = Tensor<float>(Shape{N, cfg.target_h, cfg.target_w, 1});
  batch.labels = Tensor<float>(Shape{N, 2});

  const Index stride = cfg.target_h * cfg.target_w;
  parallel_for(N, threads, [&](Index i) {
    const Index rec_idx = indices[static_cast<size_t>(i)];
    if (rec_idx < 0 || rec_idx >= static_cast<Index>(manifest.records.size()))
      throw InputError("make_batch: record index " + std::to_string(rec_idx) + " out of range");
    const ImageRecord& rec = manifest.records[static_cast<size_t>(rec_idx)];
    Tensor<float> raw = decode_image(rec.path);
    std::optional<AffineParams> params;
    if (augment) {
      RngStream sample_rng = rng.substream(static_cast<uint64_t>(rec_idx));
      params = sample_affine_params(*augment, cfg.target_w, cfg.target_h, sample_rng);
    }
    Tensor<float> img = preprocess_image(raw, cfg, params ? &*params : nullptr);
    batch.images.array().segment(i * stride, stride) = img.array();
    batch.labels.at(i, rec.label) = 1.0f;
  });
  return batch;
}

}  // namespace lpn
