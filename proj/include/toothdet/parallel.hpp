#pragma once

// Deterministic fork-join helper: fn(i) must write only to slot i of
// caller-owned storage; any reduction happens afterwards in index order, so
// results are identical for every job count.

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace toothdet {

inline void parallel_for(std::size_t n, int jobs,
                         const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t workers =
      jobs <= 1 ? 1 : std::min<std::size_t>(std::size_t(jobs), n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace toothdet
