#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace cohdial {

inline unsigned default_workers() {
    return std::max(1u, std::thread::hardware_concurrency());
}

// Calls fn(begin, end) over contiguous blocks of [0, n) on up to `workers`
// threads. The first exception thrown by any block is rethrown.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn &&fn) {
    workers = std::max(1u, workers);
    if (workers == 1 || n < 2) {
        fn(std::size_t{0}, n);
        return;
    }
    std::size_t blocks = std::min<std::size_t>(workers, n);
    std::vector<std::exception_ptr> errors(blocks);
    std::vector<std::thread> threads;
    threads.reserve(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
        std::size_t begin = n * b / blocks;
        std::size_t end = n * (b + 1) / blocks;
        threads.emplace_back([&, b, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                errors[b] = std::current_exception();
            }
        });
    }
    for (auto &t : threads)
        t.join();
    for (auto &e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace cohdial
