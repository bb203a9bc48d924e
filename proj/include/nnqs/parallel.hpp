#pragma once

#include <cstddef>
#include <functional>

namespace nnqs {

/// Worker count used by parallel_for when none is given. Defaults to the
/// hardware concurrency; 0 restores that default.
int worker_threads() noexcept;
void set_worker_threads(int n) noexcept;

/// Runs fn(i) for i in [0, n_tasks) on up to `n_threads` threads. Tasks are
/// claimed dynamically; the exception thrown by the lowest failing task index
/// is rethrown after all threads join.
void parallel_for(std::size_t n_tasks, const std::function<void(std::size_t)>& fn,
                  int n_threads = 0);

}  // namespace nnqs
