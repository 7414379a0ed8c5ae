// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace lpn {

/// Shape algebra violation: bad rank, non-positive dim, element-count mismatch.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value (dropout rate, batch size, unknown config key, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Layer stack that cannot run: an intermediate map became smaller than the
/// next kernel or pool window.
struct ArchitectureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed runtime input (non-one-hot target, empty confusion matrix, ...).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite value where a finite one is required (NaN loss, Inf gradient).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unsupported or corrupt image file.
struct DecodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dataset directory layout problem or empty dataset.
struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Missing or stale internal state (backward without matching forward).
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem failure surfaced with the offending path.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Checkpoint file rejection. Each failure mode is distinguishable by kind().
class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, bad_version, truncated, checksum_mismatch, bad_layout, shape_mismatch };

  CheckpointError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace lpn
