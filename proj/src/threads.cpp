#include "resonflow/threads.hpp"

#include <cstdlib>
#include <thread>
#include <vector>

namespace resonflow {

int thread_count() {
    // Re-read every call: getenv is cheap relative to any parallel region,
    // and callers (including tests) may adjust the variable at run time.
    if (const char* env = std::getenv("RESONFLOW_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

void parallel_for(long n, const std::function<void(long)>& fn) {
    if (n <= 0) return;
    const int workers = static_cast<int>(
        std::min<long>(n, static_cast<long>(thread_count())));
    if (workers == 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const long chunk = (n + workers - 1) / workers;
    // First exception wins, keyed by chunk start so the report is stable.
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        const long lo = t * chunk;
        const long hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        std::exception_ptr& err = errors[static_cast<std::size_t>(t)];
        pool.emplace_back([lo, hi, &fn, &err] {
            try {
                for (long i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                err = std::current_exception();
            }
        });
    }
    for (std::thread& th : pool) th.join();
    for (const std::exception_ptr& err : errors)
        if (err) std::rethrow_exception(err);
}

}  // namespace resonflow
