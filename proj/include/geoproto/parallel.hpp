#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace geoproto {

inline int default_thread_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(i) for i in [0, count) over contiguous chunks. Callers write into
/// preallocated slots, so results do not depend on the thread count. The
/// exception from the lowest failing index is rethrown.
template <typename Fn>
void parallel_for(std::ptrdiff_t count, int threads, Fn&& fn) {
  if (count <= 0) return;
  const auto workers = static_cast<std::ptrdiff_t>(std::clamp<std::ptrdiff_t>(threads, 1, count));
  if (workers == 1) {
    for (std::ptrdiff_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (std::ptrdiff_t w = 0; w < workers; ++w) {
    const std::ptrdiff_t begin = count * w / workers;
    const std::ptrdiff_t end = count * (w + 1) / workers;
    pool.emplace_back([&, begin, end] {
      for (std::ptrdiff_t i = begin; i < end; ++i) {
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace geoproto
