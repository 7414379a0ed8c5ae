// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "lpn/tensor.hpp"

namespace lpn {

/// Decodes a baseline/progressive JPEG, 8-bit PNG, or binary PGM (P5) file to
/// an [H,W,C] tensor of integer pixel values 0..255, C in {1,3}. The format
/// is detected from magic bytes; unsupported or corrupt files raise
/// DecodeError naming the format.
Tensor<float> decode_image(const std::string& path);

}  // namespace lpn
