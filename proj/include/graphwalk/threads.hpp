#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

#include "graphwalk/core.hpp"

namespace graphwalk {

/// Worker cap: hardware concurrency, optionally limited by GRAPHWALK_THREADS.
inline unsigned worker_count() {
    unsigned n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("GRAPHWALK_THREADS")) {
        char* end = nullptr;
        long cap = std::strtol(env, &end, 10);
        if (end != env && cap > 0 && static_cast<unsigned>(cap) < n)
            n = static_cast<unsigned>(cap);
    }
    return n;
}

/// Runs fn(i) for i in [0, n). Work items must write to disjoint slots;
/// results are then independent of scheduling.
inline void parallel_for(Index n, const std::function<void(Index)>& fn) {
    if (n <= 0) return;
    const unsigned workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(n));
    if (workers <= 1) {
        for (Index i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<Index> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                Index i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace graphwalk
