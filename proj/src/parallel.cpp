#include "nnqs/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nnqs {

namespace {
std::atomic<int> g_threads{0};
}

int worker_threads() noexcept {
  const int n = g_threads.load();
  if (n > 0) return n;
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

void set_worker_threads(int n) noexcept { g_threads.store(std::max(0, n)); }

void parallel_for(std::size_t n_tasks, const std::function<void(std::size_t)>& fn, int n_threads) {
  if (n_tasks == 0) return;
  if (n_threads <= 0) n_threads = worker_threads();
  const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(n_threads), n_tasks);
  if (n_workers <= 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::size_t err_index = n_tasks;
  std::exception_ptr err;

  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_tasks) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(n_workers - 1);
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(work);
    work();
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace nnqs
