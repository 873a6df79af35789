#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fredholm {

/// Worker count: FREDHOLM_MC_THREADS when set and positive, else the hardware concurrency.
inline std::size_t thread_count()
{
    if (const char* env = std::getenv("FREDHOLM_MC_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) {
                return static_cast<std::size_t>(v);
            }
        } catch (const std::exception&) {
        }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

namespace detail {
inline thread_local bool inside_parallel_region = false;
} // namespace detail

/// Runs body(i) for i in [0, count). Each index is executed exactly once; callers
/// write results into per-index slots so the outcome does not depend on scheduling.
/// Nested calls run inline on the calling worker.
template <typename Body>
void parallel_for(std::size_t count, Body&& body)
{
    const std::size_t workers = std::min(thread_count(), count);
    if (workers <= 1 || detail::inside_parallel_region) {
        for (std::size_t i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }

    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                detail::inside_parallel_region = true;
                for (std::size_t i = w; i < count; i += workers) {
                    try {
                        body(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) {
                            failure = std::current_exception();
                        }
                        return;
                    }
                }
            });
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace fredholm
