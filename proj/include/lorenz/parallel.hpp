#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace lorenz {

namespace detail {
inline std::atomic<unsigned>& thread_setting() {
  static std::atomic<unsigned> n{1};
  return n;
}
}  // namespace detail

// Worker count used by parallel_chunks. Results never depend on it.
inline void set_threads(unsigned n) { detail::thread_setting() = std::max(1u, n); }
inline unsigned threads() { return detail::thread_setting(); }

// Splits [0, count) into fixed chunks of `grain` items, runs fn(begin, end)
// per chunk and returns the per-chunk results in chunk order. The chunking is
// independent of the worker count, so merging the returned vector in order
// is deterministic.
template <typename Fn>
auto parallel_chunks(std::size_t count, std::size_t grain, Fn&& fn) {
  using R = decltype(fn(std::size_t{0}, std::size_t{0}));
  grain = std::max<std::size_t>(grain, 1);
  const std::size_t chunks = (count + grain - 1) / grain;
  std::vector<R> out(chunks);
  const unsigned workers = std::min<std::size_t>(threads(), std::max<std::size_t>(chunks, 1));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) out[c] = fn(c * grain, std::min(count, (c + 1) * grain));
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> failures(chunks);
  auto work = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        out[c] = fn(c * grain, std::min(count, (c + 1) * grain));
      } catch (...) {
        failures[c] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  // Report the lowest failing chunk so the error is thread-count independent.
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return out;
}

}  // namespace lorenz
