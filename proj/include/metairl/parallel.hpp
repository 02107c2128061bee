#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace metairl {

/// Runs f(i) for i in [0, n) on up to `workers` threads. Work items must write
/// only to their own slot; the first exception (lowest index) is rethrown
/// after all threads have joined.
template <typename F>
void parallel_for(int n, int workers, F&& f) {
  if (n <= 0) return;
  workers = std::clamp(workers, 1, n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  auto run = [&](int i) {
    try {
      f(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  };
  if (workers == 1) {
    for (int i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int i = next++; i < n; i = next++) run(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace metairl
