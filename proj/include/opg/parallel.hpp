#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace opg {

/// Number of worker threads used by the data-parallel sweeps. 0 means
/// std::thread::hardware_concurrency().
struct Execution {
    unsigned workers = 0;

    unsigned resolved() const {
        if (workers != 0) return workers;
        return std::max(1u, std::thread::hardware_concurrency());
    }
};

/// Runs body(i) for i in [0, count). Each index is handled by exactly one
/// worker and writes only its own output slot, so results do not depend on
/// the worker count. The first exception thrown (lowest index) is rethrown.
template <typename Body>
void parallel_for(std::size_t count, Execution exec, Body&& body) {
    const std::size_t workers = std::min<std::size_t>(exec.resolved(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }

    std::mutex mutex;
    std::exception_ptr first_error;
    std::size_t first_error_index = count;

    auto run = [&](std::size_t w) {
        for (std::size_t i = w; i < count; i += workers) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(mutex);
                if (i < first_error_index) {
                    first_error_index = i;
                    first_error = std::current_exception();
                }
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace opg
