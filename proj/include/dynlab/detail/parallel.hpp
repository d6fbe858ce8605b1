#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace dynlab::detail {

// Runs body(i) for i in [0, n) on up to `workers` threads. Each index writes
// only its own slot, so the caller reduces in index order afterwards and the
// result does not depend on the worker count.
template <class Body>
void parallel_for(std::size_t n, int workers, Body&& body) {
    workers = std::max(1, workers);
    if (workers == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto run = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                body(i);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    int t = int(std::min<std::size_t>(std::size_t(workers), n));
    for (int k = 0; k < t; ++k) pool.emplace_back(run);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace dynlab::detail
