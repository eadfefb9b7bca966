#pragma once

// Minimal fork-join loop. Work items are independent and write to their own
// output slots, so results never depend on the worker count.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "gridtopo/error.hpp"

namespace gridtopo {

/// Calls fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception thrown (lowest index among those observed) is rethrown.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr error;
  std::size_t error_index = n;
  auto body = [&] {
    for (;;) {
      const auto i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

/// Worker count: GRIDTOPO_WORKERS if set, else `fallback`.
inline std::size_t workers_from_env(std::size_t fallback) {
  const char* env = std::getenv("GRIDTOPO_WORKERS");
  if (!env || !*env) return fallback;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError(std::string("GRIDTOPO_WORKERS must be a positive integer, got '") + env + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace gridtopo
