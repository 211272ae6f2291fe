#pragma once

#include <cstddef>
#include <functional>

namespace blindmod {

/// Worker count: hardware concurrency, capped by BLINDMOD_THREADS when set.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Each index
/// runs exactly once; callers write results into per-index slots so the
/// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace blindmod
