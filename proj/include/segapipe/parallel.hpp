#pragma once

#include <cstddef>
#include <functional>

namespace segapipe {

/// Worker cap: SEGAPIPE_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [begin, end) across worker threads. Iterations must
/// write disjoint outputs; results never depend on the worker count.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& body);

}  // namespace segapipe
