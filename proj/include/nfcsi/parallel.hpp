#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace nfcsi {

inline int default_thread_count() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

// Runs f(begin, end, shard) over contiguous index shards. Sharding depends
// only on (n, threads), never on scheduling, so any reduction that combines
// per-shard partials in shard order is bit-reproducible.
template <typename F>
void parallel_for(std::int64_t n, int threads, F&& f) {
  if (n <= 0) return;
  threads = std::max(1, threads);
  std::int64_t chunk = (n + threads - 1) / threads;
  int shards = static_cast<int>((n + chunk - 1) / chunk);
  if (shards <= 1) {
    f(std::int64_t{0}, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(shards - 1);
  for (int s = 1; s < shards; ++s) {
    std::int64_t lo = s * chunk;
    std::int64_t hi = std::min(n, lo + chunk);
    pool.emplace_back([&f, lo, hi, s] { f(lo, hi, s); });
  }
  f(std::int64_t{0}, std::min(n, chunk), 0);
  for (auto& t : pool) t.join();
}

}  // namespace nfcsi
