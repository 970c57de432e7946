#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace fab {

/// Runs fn(i) for i in [0, n) on `threads` workers. Work items claim indices
/// from a shared atomic counter; fn must only write to per-index slots so
/// results are independent of scheduling. threads <= 1 runs inline.
/// The first exception thrown by any worker is rethrown on the caller.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  pool.reserve(k);
  for (std::size_t t = 0; t < k; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failed.load() && error) std::rethrow_exception(error);
}

}  // namespace fab
