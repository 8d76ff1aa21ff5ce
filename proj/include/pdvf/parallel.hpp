#pragma once

#include <atomic>
#include <thread>
#include <vector>

namespace pdvf {

// Runs fn(i) for i in [0, n) across up to max_threads workers. Jobs must
// write only to their own output slots; iteration order is unspecified but
// results are position-addressed, so outcomes stay deterministic.
template <typename Fn>
void parallel_for(int n, const Fn& fn, int max_threads = 0) {
    if (max_threads <= 0)
        max_threads = int(std::max(1u, std::thread::hardware_concurrency()));
    int workers = std::min(max_threads, n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mu;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace pdvf
