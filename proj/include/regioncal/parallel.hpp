#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace regioncal {

/// Resolves a worker count: a positive request wins, otherwise the
/// REGIONCAL_JOBS environment variable, otherwise hardware concurrency.
unsigned resolve_jobs(unsigned requested);

/// Runs fn(i) for every i in [0, n), split into contiguous blocks across up
/// to `jobs` threads. fn must only touch per-index state; reductions happen
/// after the call, in index order, so results never depend on `jobs`.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  if (n == 0) return;
  const unsigned workers = std::min<std::size_t>(jobs == 0 ? 1 : jobs, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers);
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t block = (n + workers - 1) / workers;
  for (unsigned t = 0; t < workers; ++t) {
    const std::size_t lo = t * block;
    const std::size_t hi = std::min(n, lo + block);
    threads.emplace_back([&, t, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

}  // namespace regioncal
