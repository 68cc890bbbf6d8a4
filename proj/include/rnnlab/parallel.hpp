#pragma once

#include <cstddef>
#include <functional>

namespace rnnlab {

// Worker count from LAB_THREADS (default 1, clamped to [1, 256]).
int lab_threads();

// Runs fn(0..n-1) over up to `threads` workers (0: lab_threads()). Each
// index runs exactly once; callers write results into per-index slots so
// the outcome does not depend on scheduling. The first exception thrown by
// any task is rethrown after all workers have joined.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, int threads = 0);

}  // namespace rnnlab
