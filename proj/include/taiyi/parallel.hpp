#pragma once

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace taiyi {

// Index-parallel loop over [0, n). Work items must be independent; results
// keyed by index stay deterministic regardless of thread timing. Forward
// passes qualify: they only read shared weights.
inline void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    const size_t hw = std::thread::hardware_concurrency();
    const size_t workers = std::min(n, hw == 0 ? 1 : hw);
    if (workers <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w]() {
            try {
                for (size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace taiyi
