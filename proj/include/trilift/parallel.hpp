// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace trilift {

// Process-wide worker count; set once by the CLI, read by parallel loops.
inline int& worker_count() {
  static int n = 1;
  return n;
}

// Splits [0, n) into a fixed number of chunks and runs fn(chunk_id, begin, end)
// across workers. The chunking (and therefore any per-chunk accumulation that
// callers merge in chunk order) is independent of the worker count, so results
// are bit-identical whether this runs serial or threaded.
inline void parallel_chunks(size_t n, int n_chunks,
                            const std::function<void(int, size_t, size_t)>& fn) {
  if (n == 0) return;
  n_chunks = std::max(1, n_chunks);
  size_t per = (n + n_chunks - 1) / n_chunks;
  std::vector<std::pair<size_t, size_t>> ranges;
  for (size_t b = 0; b < n; b += per) ranges.emplace_back(b, std::min(n, b + per));

  int workers = std::min<int>(worker_count(), static_cast<int>(ranges.size()));
  if (workers <= 1) {
    for (size_t c = 0; c < ranges.size(); ++c) fn(static_cast<int>(c), ranges[c].first, ranges[c].second);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (size_t c = next.fetch_add(1); c < ranges.size(); c = next.fetch_add(1))
        fn(static_cast<int>(c), ranges[c].first, ranges[c].second);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace trilift
