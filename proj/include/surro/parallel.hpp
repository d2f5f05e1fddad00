#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace surro {

// Runs fn(i) for i in [begin, end) on up to `jobs` threads, contiguous chunks
// per thread. Callers must make fn(i) independent of execution order; results
// should be written to slot i of a preallocated buffer.
template <typename F>
void parallel_for(int begin, int end, int jobs, F&& fn) {
    int n = end - begin;
    if (n <= 0) return;
    if (jobs <= 1 || n == 1) {
        for (int i = begin; i < end; ++i) fn(i);
        return;
    }
    int workers = std::min(jobs, n);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    std::mutex err_mu;
    std::exception_ptr err;
    for (int w = 0; w < workers; ++w) {
        int lo = begin + static_cast<int>(static_cast<long>(n) * w / workers);
        int hi = begin + static_cast<int>(static_cast<long>(n) * (w + 1) / workers);
        threads.emplace_back([&, lo, hi] {
            try {
                for (int i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    if (err) std::rethrow_exception(err);
}

} // namespace surro
