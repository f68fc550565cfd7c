#ifndef FADE_PARALLEL_H_
#define FADE_PARALLEL_H_

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fade {

// Runs fn(i) for i in [0, n) on up to `jobs` threads using static contiguous
// chunks. Each index is visited exactly once, so callers writing to slot i of
// a pre-sized output get results in index order. The first exception thrown
// by any worker is rethrown on the calling thread.
template <typename Fn>
void ParallelFor(size_t n, int jobs, Fn&& fn) {
  size_t workers = std::min<size_t>(std::max(jobs, 1), n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (size_t w = 0; w < workers; ++w) {
    size_t begin = n * w / workers;
    size_t end = n * (w + 1) / workers;
    threads.emplace_back([&, begin, end] {
      try {
        for (size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace fade

#endif  // FADE_PARALLEL_H_
