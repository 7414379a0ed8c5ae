// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "lpn/optim.hpp"
#include "lpn/pipeline.hpp"
#include "lpn/train.hpp"

namespace lpn {

/// Run configuration. Every default equals the reference setup, so an empty
/// JSON object reproduces it exactly; unknown keys are rejected.
struct RunConfig {
  std::string dataset_root = ".";
  std::string out_dir = "out";
  uint64_t seed = 42;
  TrainConfig train;
  AdamConfig optimizer;
  AugmentationConfig augment;
  PreprocessConfig preprocess;

  static RunConfig from_json_file(const std::string& path);
  static RunConfig from_json_text(const std::string& text);

  /// Effective configuration as pretty-printed JSON (stable key order).
  std::string to_json_text() const;

  void validate() const;  // throws ConfigError naming the offending key
};

}  // namespace lpn
