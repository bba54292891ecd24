#pragma once

#include <cstddef>
#include <functional>

namespace qdoor {

/// Number of worker threads to use. Honors the QDOOR_THREADS environment
/// variable as an upper bound; defaults to the hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, so any
/// caller that writes results by index and reduces in index order gets output
/// that does not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace qdoor
