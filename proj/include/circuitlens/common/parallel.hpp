#pragma once

#include <cstddef>
#include <functional>

namespace circuitlens {

/// Worker cap: CIRCUITLENS_THREADS when set to a positive integer, otherwise
/// std::thread::hardware_concurrency() (at least 1).
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) over up to worker_count() threads. Each index is
/// executed exactly once; callers write results into per-index slots and
/// reduce them afterwards in index order, which keeps outputs independent of
/// the thread count. The exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace circuitlens
