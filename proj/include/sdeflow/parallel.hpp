#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sdeflow {

inline std::size_t default_workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

/// Runs body(worker, begin, end) over contiguous chunks of [0, count).
///
/// Chunk boundaries depend on the worker count, so bodies must only write
/// per-index outputs. The first exception thrown by any worker is rethrown.
template <typename Body>
void parallel_chunks(std::size_t count, std::size_t workers, Body&& body) {
  if (count == 0) return;
  workers = std::clamp<std::size_t>(workers, 1, count);
  if (workers == 1) {
    body(std::size_t{0}, std::size_t{0}, count);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const std::size_t base = count / workers;
  const std::size_t extra = count % workers;
  std::size_t begin = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t end = begin + base + (w < extra ? 1 : 0);
    pool.emplace_back([&, w, begin, end] {
      try {
        body(w, begin, end);
      } catch (...) {
        std::scoped_lock lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
    begin = end;
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace sdeflow
