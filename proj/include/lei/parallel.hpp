#pragma once

#include <cstddef>
#include <functional>

namespace lei {

/// Process-wide cap on worker threads. Initialized from LEI_THREADS when set,
/// otherwise 1.
int thread_count();
void set_thread_count(int n);

/// Runs body(i) for i in [0, n). Work items must write to disjoint outputs;
/// results are then independent of the thread count. Calls made from inside a
/// worker run serially.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace lei
