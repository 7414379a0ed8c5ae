// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "lpn/model.hpp"

// LPNW checkpoint format, fixed little-endian:
//   magic 'L' 'P' 'N' 'W'
//   u16 version (= 1)
//   u16 tensor count
//   per tensor: u8 name length, name bytes, u8 rank, u32 dims[rank],
//               float32 payload (row-major)
//   u32 CRC32 (IEEE reflected) of all preceding bytes
// Round trips are byte-exact; loads reject bad magic, version, layout,
// truncation and checksum failures with distinct errors.

namespace lpn {

void save_weights(const ModelParams<float>& params, const std::string& path);

/// Structural load: magic/version/layout/CRC validated.
ModelParams<float> load_weights(const std::string& path);

/// Structural load plus name/shape validation against a model spec.
ModelParams<float> load_weights(const std::string& path, const ModelSpec& spec);

/// Throws CheckpointError(shape_mismatch) unless params match the spec's
/// expected tensor names and shapes in order.
void validate_params(const ModelParams<float>& params, const ModelSpec& spec);

/// IEEE CRC32 (reflected, poly 0xEDB88320), init/final 0xFFFFFFFF.
uint32_t crc32(const uint8_t* data, size_t len);

}  // namespace lpn
