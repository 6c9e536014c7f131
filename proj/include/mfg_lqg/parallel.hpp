#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace mfg_lqg {

/// Worker count: an explicit request wins, then MFG_LQG_THREADS, then the
/// hardware concurrency. Always at least 1.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MFG_LQG_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs f(i) for i in [0, count) on up to `threads` workers. Each index is
/// processed exactly once; results must be written to per-index slots. If
/// any call throws, the exception of the lowest failing index is rethrown.
template <class F>
void parallel_for(int count, int threads, F&& f) {
  const int workers = std::min(std::max(threads, 1), std::max(count, 1));
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < count; i += workers) {
        try {
          f(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace mfg_lqg
