#pragma once

#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace chain {

// Worker count for embarrassingly parallel per-record loops, from
// CHAIN_NUM_WORKERS (default 1). Results must be written to disjoint slots by
// index so parallel and serial runs are identical.
inline int num_workers() {
  const char* env = std::getenv("CHAIN_NUM_WORKERS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int workers = num_workers();
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const int used = static_cast<int>(std::min<std::size_t>(workers, n));
  pool.reserve(used);
  for (int w = 0; w < used; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = static_cast<std::size_t>(w); i < n; i += used) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace chain
