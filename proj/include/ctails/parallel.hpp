#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

#include "ctails/rng.hpp"

namespace ctails {

// Worker count: explicit request > CASCADE_TAILS_THREADS > hardware.
inline unsigned thread_count(unsigned requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CASCADE_TAILS_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

// Runs fn(replica_index, stream) for each replica with an independent stream
// keyed by (seed, index). Results land in replica order, so any fixed-order
// reduction over the returned vector is identical for every worker count.
template <class T, class Fn>
std::vector<T> replica_map(std::size_t count, std::uint64_t seed, Fn&& fn,
                           unsigned threads = 0) {
  std::vector<T> results(count);
  unsigned workers = thread_count(threads);
  if (workers <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) {
      RngStream stream(seed, i);
      results[i] = fn(i, stream);
    }
    return results;
  }
  std::atomic<std::size_t> next{0};
  const std::size_t chunk = std::max<std::size_t>(1, count / (workers * 8));
  auto work = [&] {
    for (;;) {
      std::size_t begin = next.fetch_add(chunk);
      if (begin >= count) return;
      std::size_t end = std::min(begin + chunk, count);
      for (std::size_t i = begin; i < end; ++i) {
        RngStream stream(seed, i);
        results[i] = fn(i, stream);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace ctails
