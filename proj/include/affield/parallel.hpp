#pragma once

#include <cstddef>
#include <functional>

namespace affield {

/// Worker cap: AFFIELD_THREADS if set to a positive integer, else the
/// hardware concurrency.
int thread_cap();

/// Runs body(i) for i in [0, n). Iterations must write disjoint outputs;
/// callers reduce per-index results themselves in index order, which keeps
/// results independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace affield
