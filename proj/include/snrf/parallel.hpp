#pragma once

#include <cstddef>
#include <functional>

namespace snrf {

// Worker count from SNRF_THREADS (0 or unset = hardware concurrency).
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Callers write
/// results into pre-sized slots keyed by i, so output order never depends on
/// scheduling. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace snrf
