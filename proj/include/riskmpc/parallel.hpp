#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace riskmpc {

// Worker count: RISKMPC_THREADS when set (>=1), else hardware concurrency.
inline unsigned worker_count() {
    if (const char* env = std::getenv("RISKMPC_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<unsigned>(n);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

// Runs fn(begin, end) over contiguous chunks of [0, total). Results must
// be written to disjoint, index-addressed storage so the outcome does not
// depend on the worker count.
inline void parallel_chunks(std::size_t total,
                            const std::function<void(std::size_t, std::size_t)>& fn,
                            unsigned threads = 0) {
    if (threads == 0) threads = worker_count();
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(total, 1)));
    if (threads <= 1 || total <= 1) {
        fn(0, total);
        return;
    }
    const std::size_t chunk = (total + threads - 1) / threads;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(total, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back(fn, begin, end);
    }
    for (auto& th : pool) th.join();
}

}  // namespace riskmpc
