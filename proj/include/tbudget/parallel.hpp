#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace tbudget {

// Runs fn(begin, end, chunk) over `chunks` contiguous slices of [0, n) using
// up to `workers` threads. Slice boundaries depend only on (n, chunks), so
// callers that reduce per-slice results in slice order get the same bits for
// any worker count.
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t chunks, int workers, Fn&& fn) {
  chunks = std::max<std::size_t>(1, std::min(chunks, std::max<std::size_t>(n, 1)));
  const auto bounds = [&](std::size_t c) { return n * c / chunks; };
  if (workers <= 1 || chunks == 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(bounds(c), bounds(c + 1), c);
    return;
  }
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::thread> pool;
  const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(workers), chunks);
  pool.reserve(nthreads);
  for (std::size_t w = 0; w < nthreads; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t c = w; c < chunks; c += nthreads) {
        try {
          fn(bounds(c), bounds(c + 1), c);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// One slice per item.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  parallel_chunks(n, n, workers, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace tbudget
