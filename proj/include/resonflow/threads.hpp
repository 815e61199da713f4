#pragma once
// Deterministic work partitioning. Results must be written to
// caller-preallocated, index-addressed storage so the outcome is
// byte-identical for any thread count.

#include <functional>

namespace resonflow {

// Number of worker threads: RESONFLOW_THREADS when set (clamped to >= 1),
// otherwise std::thread::hardware_concurrency().
int thread_count();

// Runs fn(i) for every i in [0, n), statically partitioned into contiguous
// chunks. fn must only write to per-index storage.
void parallel_for(long n, const std::function<void(long)>& fn);

}  // namespace resonflow
