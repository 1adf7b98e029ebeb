#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lattice_bsde {

struct Execution {
  unsigned threads = 1;
  /// Slices smaller than this run inline.
  std::size_t min_parallel_items = 4096;
};

/// Calls body(i) for i in [0, count). Chunks are contiguous and each index is
/// visited exactly once, so results written to distinct slots do not depend on
/// the thread count. The first exception thrown by any worker is rethrown.
template <class Body>
void parallel_for(std::size_t count, const Execution& exec, Body&& body) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(exec.threads == 0 ? 1 : exec.threads, count));
  if (workers <= 1 || count < exec.min_parallel_items) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace lattice_bsde
