#pragma once

#include <cstddef>
#include <functional>

namespace vperturb::util {

// Worker count: VPERTURB_THREADS when set to a positive integer, otherwise
// the hardware concurrency (at least 1).
std::size_t thread_count();

// Calls fn(i) for i in [0, n) on up to `threads` workers. Each index runs
// exactly once; the first exception thrown is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t threads = thread_count());

}  // namespace vperturb::util
