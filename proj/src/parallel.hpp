#pragma once

#include <cstddef>
#include <functional>

namespace cgap2::detail {

/// Worker cap from CGAP2_THREADS (default 1).
std::size_t thread_cap();

/// Runs body(begin, end) over disjoint contiguous chunks of [0, n). Every
/// index is visited exactly once and chunks never share outputs, so the
/// result does not depend on the worker count.
void parallel_for(std::size_t n, std::size_t min_chunk, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace cgap2::detail
