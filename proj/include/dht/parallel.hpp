#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dht {

/// Resolves a requested worker count; 0 means "all hardware threads".
inline unsigned resolve_workers(unsigned requested) {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(begin, end) over contiguous chunks of [0, count). Callers must
/// write results by index so the outcome is independent of the worker count.
template <class Body>
void parallel_chunks(std::size_t count, unsigned workers, Body&& body) {
    workers = resolve_workers(workers);
    if (workers == 1 || count < 2) {
        body(std::size_t{0}, count);
        return;
    }
    const std::size_t n_chunks = std::min<std::size_t>(workers, count);
    std::vector<std::thread> pool;
    pool.reserve(n_chunks);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (std::size_t c = 0; c < n_chunks; ++c) {
        const std::size_t begin = count * c / n_chunks;
        const std::size_t end = count * (c + 1) / n_chunks;
        pool.emplace_back([&, begin, end] {
            try {
                body(begin, end);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

template <class Body>
void parallel_for(std::size_t count, unsigned workers, Body&& body) {
    parallel_chunks(count, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) body(i);
    });
}

}  // namespace dht
