#include "parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace cgap2::detail {

std::size_t thread_cap() {
  static const std::size_t cap = [] {
    const char* env = std::getenv("CGAP2_THREADS");
    if (env == nullptr) return std::size_t{1};
    try {
      long v = std::stol(env);
      return static_cast<std::size_t>(std::max(1L, v));
    } catch (...) {
      return std::size_t{1};
    }
  }();
  return cap;
}

void parallel_for(std::size_t n, std::size_t min_chunk, const std::function<void(std::size_t, std::size_t)>& body) {
  std::size_t workers = std::min(thread_cap(), std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_chunk)));
  if (workers <= 1) {
    if (n) body(0, n);
    return;
  }
  std::vector<std::jthread> pool;
  std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    std::size_t b = w * chunk, e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back([&body, b, e] { body(b, e); });
  }
  body(0, std::min(n, chunk));
}

}  // namespace cgap2::detail
