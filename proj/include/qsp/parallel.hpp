#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace qsp {

/// Runs fn(begin, end, worker) on `threads` contiguous chunks of [0, n).
/// The first exception thrown by any chunk is rethrown on the caller.
inline void parallel_chunks(int n, int threads, const std::function<void(int, int, int)>& fn) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex guard;
  for (int t = 0; t < threads; ++t) {
    const int begin = static_cast<int>(static_cast<long>(n) * t / threads);
    const int end = static_cast<int>(static_cast<long>(n) * (t + 1) / threads);
    pool.emplace_back([&, begin, end, t] {
      try {
        fn(begin, end, t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(guard);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Bounded worker pool over independent jobs 0..n-1; jobs pull indices.
inline void parallel_jobs(int n, int threads, const std::function<void(int)>& job) {
  threads = std::clamp(threads, 1, std::max(1, n));
  std::mutex guard;
  int next = 0;
  auto worker = [&] {
    for (;;) {
      int idx;
      {
        std::lock_guard<std::mutex> lock(guard);
        if (next >= n) return;
        idx = next++;
      }
      job(idx);
    }
  };
  if (threads == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace qsp
