// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

#include "lpn/tensor.hpp"

namespace lpn {

/// Runs fn(i) for i in [0, n). With threads > 1 the range is split into
/// contiguous chunks across worker threads; fn(i) must be independent of
/// execution order (callers reduce results in index order afterwards).
/// The first worker exception is rethrown on the calling thread.
template <typename Fn>
void parallel_for(Index n, int threads, Fn&& fn) {
  if (n <= 0) return;
  const int workers = static_cast<int>(std::min<Index>(std::max(threads, 1), n));
  if (workers == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  const Index chunk = (n + workers - 1) / workers;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const Index begin = w * chunk, end = std::min(n, begin + chunk);
    pool.emplace_back([&, w, begin, end] {
      try {
        for (Index i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[static_cast<size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Worker-count resolution: explicit flag > LPN_THREADS env > hardware.
int default_threads(int flag_value = 0);

}  // namespace lpn
