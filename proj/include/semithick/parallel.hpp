#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace semithick {

// Work is split into fixed blocks; each block owns its generator, so results do not depend on the thread count.
inline std::mt19937_64 block_rng(std::uint64_t seed, std::uint64_t block) {
  std::seed_seq sq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(block), std::uint32_t(block >> 32)};
  return std::mt19937_64(sq);
}

// Uniform in [0, 1) from the top 53 bits.
inline double unit_real(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

inline int resolve_threads(int threads) {
  if (threads > 0) return threads;
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : int(hc);
}

// Runs fn(block) for block in [0, n_blocks) on up to `threads` workers. fn must write only to per-block slots.
template <class Fn>
void parallel_blocks(std::size_t n_blocks, int threads, Fn&& fn) {
  int nt = std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(n_blocks, 1));
  if (nt <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) fn(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t b = next.fetch_add(1);
        if (b >= n_blocks) return;
        try {
          fn(b);
        } catch (...) {
          std::lock_guard<std::mutex> lk(mu);
          if (!err) err = std::current_exception();
          next = n_blocks;
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace semithick
