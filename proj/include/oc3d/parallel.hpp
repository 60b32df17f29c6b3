#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace oc3d {

// Worker cap: OC3D_THREADS if set, else hardware concurrency. Results of every
// parallel_for call site must not depend on this value; the helper only hands
// out disjoint index ranges and joins.
inline unsigned thread_budget() {
  if (const char* env = std::getenv("OC3D_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Static block partition of [0, n). fn must write only to slots owned by its
// own indices.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(thread_budget(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace oc3d
