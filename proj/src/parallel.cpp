#include "lei/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace lei {

namespace {

int initial_threads() {
    if (const char* env = std::getenv("LEI_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

std::atomic<int> g_threads{initial_threads()};
thread_local bool t_in_worker = false;

}  // namespace

int thread_count() { return g_threads.load(); }

void set_thread_count(int n) { g_threads.store(std::max(1, n)); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const auto workers = static_cast<std::size_t>(std::min<long>(thread_count(), static_cast<long>(n)));
    if (workers <= 1 || t_in_worker) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);

    auto run = [&] {
        t_in_worker = true;
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
        t_in_worker = false;
    };

    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
    // Lowest failing index wins so the reported error does not depend on scheduling.
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace lei
