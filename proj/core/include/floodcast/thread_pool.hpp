#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace floodcast {

// Runs fn(0..n_jobs-1) on `workers` threads. Jobs must be independent; the
// first thrown exception is rethrown after all threads join.
inline void parallel_for(long n_jobs, int workers, const std::function<void(long)>& fn) {
  if (n_jobs <= 0) return;
  workers = static_cast<int>(std::max<long>(1, std::min<long>(workers, n_jobs)));
  if (workers == 1) {
    for (long i = 0; i < n_jobs; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    threads.emplace_back([&] {
      while (true) {
        const long i = next.fetch_add(1);
        if (i >= n_jobs) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& thread : threads) {
    thread.join();
  }
  if (first_error) {
    std::rethrow_exception(first_error);
  }
}

}  // namespace floodcast
