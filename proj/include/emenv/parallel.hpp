#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace emenv {

// Runs fn(i) for i in [0, count) on up to `threads` workers.  Callers write
// into pre-sized per-index slots, so results are independent of the thread
// count and of scheduling order.
inline void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  const int workers = std::max(1, std::min(threads, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace emenv
