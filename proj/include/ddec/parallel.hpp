#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace ddec {

/// Worker count: hardware concurrency, capped by the DDEC_THREADS env var.
inline int thread_count() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (const char* env = std::getenv("DDEC_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
}

/// Static block partition of [0, n); fn(begin, end) per worker. Deterministic:
/// workers write disjoint ranges, no reductions.
inline void parallel_for_blocks(int n, const std::function<void(int, int)>& fn) {
    const int workers = std::min(thread_count(), std::max(1, n));
    if (workers == 1 || n < 64) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        int lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back(fn, lo, hi);
    }
    for (auto& t : pool) t.join();
}

}  // namespace ddec
