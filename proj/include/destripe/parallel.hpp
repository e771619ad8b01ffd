#pragma once

#include "destripe/grid.hpp"

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace destripe {

/// Worker count used by `parallel_for`; 1 runs everything on the caller.
void set_thread_count(int threads);
int thread_count();

/// Runs `body(n)` for n in [0, count) over contiguous static chunks.
/// Bodies must write disjoint outputs; no reduction happens here, so results
/// do not depend on the worker count.
template <typename Body>
void parallel_for(Index count, Body&& body) {
  const int workers = static_cast<int>(std::min<Index>(thread_count(), count));
  if (workers <= 1) {
    for (Index n = 0; n < count; ++n) body(n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const Index chunk = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        const Index end = std::min(count, (w + 1) * chunk);
        for (Index n = w * chunk; n < end; ++n) body(n);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace destripe
