#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace motionrag {

// Static partition over [0, n). Work items must be independent; results land
// in caller-owned slots so the outcome is identical for any thread count.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  threads = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([=, &fn] {
      for (int i = w; i < n; i += threads) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace motionrag
