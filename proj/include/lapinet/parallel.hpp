#pragma once

#include <thread>
#include <vector>

#include "lapinet/tensor.hpp"

namespace lapinet {

/// Runs fn(begin, end) over contiguous blocks of [0, total) on `threads`
/// threads. Blocks are disjoint, so writes to per-index slots never race.
/// threads <= 1 runs inline.
template <typename Fn>
void parallel_for_blocks(Index total, int threads, Fn&& fn) {
  if (threads <= 1 || total <= 1) {
    fn(Index{0}, total);
    return;
  }
  const Index nblocks = std::min<Index>(threads, total);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nblocks));
  for (Index b = 0; b < nblocks; ++b) {
    const Index begin = total * b / nblocks;
    const Index end = total * (b + 1) / nblocks;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace lapinet
