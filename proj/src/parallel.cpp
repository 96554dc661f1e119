// parallel.cpp — fork/join over disjoint index ranges.

#include "splicer/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace splicer {

namespace {
std::atomic<int> g_threads{1};
}

int num_threads() { return g_threads.load(std::memory_order_relaxed); }

void set_num_threads(int n) {
  if (n <= 0) {
    n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
  }
  g_threads.store(n, std::memory_order_relaxed);
}

void parallel_for(std::size_t total,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  if (total == 0) return;
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(num_threads()), total);
  if (workers <= 1) {
    fn(0, total);
    return;
  }
  const std::size_t chunk = (total + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(total, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(0, std::min(total, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace splicer
