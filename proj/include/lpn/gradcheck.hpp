// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "lpn/model.hpp"

namespace lpn {

struct GradCheckGroup {
  std::string layer;    // conv1_1 .. dense2
  double rel_err = 0;   // ||backprop - fd||2 / ||fd||2 over kernel+bias
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_err = 0;
  bool pass = false;
};

/// Reduced stack mirroring the reference layer types (four two-conv blocks,
/// pooling, dense head with dropout) on a 20x20 input, small enough for
/// exhaustive finite differencing. Ten parameter groups, like the full model.
ModelSpec build_reduced_spec();

/// Compares model_backward against central finite differences (step 1e-5) of
/// the full weighted cross-entropy loss, in double precision, on a seeded
/// random batch. Reports the relative error per parameter group.
GradCheckReport gradient_check(const ModelSpec& spec, uint64_t seed, double tolerance,
                               Index batch_size = 2);

}  // namespace lpn
