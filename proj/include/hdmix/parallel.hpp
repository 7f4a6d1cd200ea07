#pragma once

#include <cstddef>
#include <functional>

namespace hdmix {

/// Worker count: HDMIX_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t thread_count();

/// Runs body(i) for i in [0, count) on up to thread_count() threads. If any
/// call throws, the exception of the lowest failing index is rethrown after
/// all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace hdmix
