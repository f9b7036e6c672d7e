#pragma once

#include <cstddef>
#include <exception>
#include <functional>

namespace lvseg::cli {

/// Worker count: hardware concurrency, capped by LV_PIPELINE_THREADS when set.
std::size_t thread_count();

/// Calls fn(i) for i in [0, n) on up to thread_count() threads. Callers write
/// results by index, so output order never depends on scheduling. The
/// exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace lvseg::cli
