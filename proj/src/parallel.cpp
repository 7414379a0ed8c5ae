// SPDX-License-Identifier: Apache-2.0
#include "lpn/parallel.hpp"

#include <cstdlib>

namespace lpn {

int default_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("LPN_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace lpn
