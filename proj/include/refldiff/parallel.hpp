#pragma once

#include <cstddef>
#include <functional>

namespace refldiff {

// Worker count: hardware concurrency, capped by REFLDIFF_THREADS when set.
std::size_t worker_count();

// Runs fn(begin, end) over contiguous chunks of [0, n). Chunks are disjoint, so
// results written per index do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace refldiff
