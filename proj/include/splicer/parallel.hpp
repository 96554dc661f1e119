// parallel.hpp — deterministic fork/join helper for the heavy kernels.
//
// Work is split into disjoint index ranges, one per worker; no worker writes
// outside its range, so results are bitwise independent of the thread count.
#pragma once

#include <cstddef>
#include <functional>

namespace splicer {

// Number of worker threads used by parallel_for (>= 1).
int num_threads();
void set_num_threads(int n);  // n <= 0 selects hardware concurrency

// Calls fn(begin, end) on disjoint subranges of [0, total).
void parallel_for(std::size_t total,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace splicer
