#pragma once

#include <cstddef>
#include <functional>

namespace funflow {

/// Worker count: FUNFLOW_THREADS if set (>= 1), else hardware concurrency.
unsigned max_threads();

/// Runs body(i) for i in [0, n). Each index writes only its own output slot,
/// so results do not depend on scheduling. The first exception thrown by any
/// body is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace funflow
