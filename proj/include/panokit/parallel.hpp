#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace panokit {

// Static block partition over [0, n). Each index is touched by exactly one
// worker, so outputs written per-index are identical for any worker count.
inline void parallel_for(std::size_t n, std::size_t num_workers,
                         const std::function<void(std::size_t)>& fn) {
  if (num_workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (num_workers > n) num_workers = n;
  std::vector<std::thread> workers;
  workers.reserve(num_workers);
  const std::size_t chunk = (n + num_workers - 1) / num_workers;
  for (std::size_t w = 0; w < num_workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace panokit
