#pragma once

#include <cstddef>
#include <functional>

namespace mflow {

/// Number of workers to use for `requested` (0 means hardware parallelism).
std::size_t resolveThreads(std::size_t requested);

/// Calls body(i) for every i in [0, count) on up to `threads` workers. Each
/// index is visited exactly once; callers write results into per-index slots
/// so the outcome does not depend on scheduling. The first exception thrown by
/// a body is rethrown on the calling thread.
void parallelFor(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace mflow
