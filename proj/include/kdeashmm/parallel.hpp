#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace kdeas {

// Fixed block size for all block-parallel passes. The partition depends
// only on the item count, never on the thread count, so per-block results
// merged in block order are identical at any --threads setting.
inline constexpr std::size_t kBlockSize = 256;

inline std::size_t block_count(std::size_t n_items) {
  return (n_items + kBlockSize - 1) / kBlockSize;
}

inline int resolve_threads(int threads) {
  if (threads > 0) return threads;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(begin, end, block_index) once per block, distributing blocks
// over `threads` workers (0 = auto). Each block is processed by exactly
// one worker; fn must only write block-private or disjoint state.
template <typename Fn>
void parallel_blocks(std::size_t n_items, int threads, Fn&& fn) {
  const std::size_t nblocks = block_count(n_items);
  if (nblocks == 0) return;
  const int n_threads = std::min<std::size_t>(resolve_threads(threads), nblocks);
  if (n_threads <= 1) {
    for (std::size_t b = 0; b < nblocks; ++b)
      fn(b * kBlockSize, std::min(n_items, (b + 1) * kBlockSize), b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= nblocks || failed.load(std::memory_order_relaxed)) return;
      try {
        fn(b * kBlockSize, std::min(n_items, (b + 1) * kBlockSize), b);
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failed.load()) std::rethrow_exception(error);
}

}  // namespace kdeas
