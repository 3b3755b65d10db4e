#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace maskplan {

// Contiguous-chunk parallel loop. Thread t owns [t*n/T, (t+1)*n/T); callers
// reduce per-thread results in thread order so outcomes stay deterministic
// for a fixed thread count.
inline void parallel_chunks(int n, int threads,
                            const std::function<void(int thread_idx, int begin, int end)>& fn) {
    if (threads <= 1 || n <= 1) {
        fn(0, 0, n);
        return;
    }
    threads = std::min(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        int begin = static_cast<int>(static_cast<int64_t>(n) * t / threads);
        int end = static_cast<int>(static_cast<int64_t>(n) * (t + 1) / threads);
        pool.emplace_back(fn, t, begin, end);
    }
    for (auto& th : pool) th.join();
}

}  // namespace maskplan
