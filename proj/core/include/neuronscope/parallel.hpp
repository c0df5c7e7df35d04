#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace neuronscope {

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

// Runs fn(i) for i in [0, n). Work is handed out in fixed-size chunks from a
// shared counter; every fn(i) writes only to slot i of its output, so the
// result does not depend on the number of workers.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = resolve_threads(threads);
  if (n == 0) return;
  if (threads <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  constexpr std::size_t kChunk = 16;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t begin = next.fetch_add(kChunk);
      if (begin >= n) return;
      const std::size_t end = std::min(begin + kChunk, n);
      for (std::size_t i = begin; i < end; ++i) fn(i);
    }
  };
  std::vector<std::thread> pool;
  const unsigned nw = static_cast<unsigned>(
      std::min<std::size_t>(threads, (n + kChunk - 1) / kChunk));
  pool.reserve(nw);
  for (unsigned t = 0; t < nw; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace neuronscope
