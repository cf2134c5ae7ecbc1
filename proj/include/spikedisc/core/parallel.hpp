#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace spikedisc {

// Worker cap: SPIKEDISC_THREADS wins, otherwise hardware concurrency.
inline int max_threads() {
  static const int cached = [] {
    if (const char* env = std::getenv("SPIKEDISC_THREADS")) {
      int n = std::atoi(env);
      if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return cached;
}

// Runs fn(begin, end) over disjoint index ranges. Each worker writes only its
// own range, so results do not depend on the worker count.
inline void parallel_for(long n, long grain, const std::function<void(long, long)>& fn) {
  if (n <= 0) return;
  int workers = std::min<long>(max_threads(), std::max<long>(1, n / std::max<long>(1, grain)));
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  long chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    long b = w * chunk, e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace spikedisc
