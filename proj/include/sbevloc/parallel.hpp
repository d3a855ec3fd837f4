#pragma once

#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sbevloc {

/// Runs fn(i) for i in [0, n). With workers > 1 the iterations are sharded
/// across threads; callers must write results into per-index slots so the
/// outcome is identical for any worker count. Exceptions are rethrown.
template <typename Fn>
inline void parallel_for(std::size_t n, int workers, Fn&& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::size_t w = std::min<std::size_t>(workers, n);
    std::vector<std::thread> threads;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (std::size_t t = 0; t < w; ++t) {
        threads.emplace_back([&, t]() {
            try {
                for (std::size_t i = t; i < n; i += w) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (std::thread& th : threads) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace sbevloc
