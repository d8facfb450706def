#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace tensornet {

/// A resource guard refused the request (e.g. a dense tensor would exceed
/// the entry budget). The CLI maps this to exit code 3.
struct guard_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A randomized construction could not satisfy its constraints within its
/// attempt budget.
struct constructive_failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A mathematical identity or theorem bound was observed violated.
/// The CLI maps this to exit code 4.
struct invariant_violation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed to converge.
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Formats a double with 17 significant digits, enough for a lossless
/// text round trip.
inline std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

/// Runs body(lo, hi) over a partition of [0, n), using threads when the
/// range is large. Each index must be written by exactly one chunk, so the
/// result does not depend on the partition.
inline void parallel_for(std::int64_t n,
                         const std::function<void(std::int64_t, std::int64_t)>& body) {
  const std::int64_t grain = 1 << 15;
  unsigned hw = std::thread::hardware_concurrency();
  if (n < 2 * grain || hw < 2) {
    body(0, n);
    return;
  }
  std::int64_t nthreads = std::min<std::int64_t>(hw, (n + grain - 1) / grain);
  std::int64_t per = (n + nthreads - 1) / nthreads;
  std::vector<std::thread> pool;
  for (std::int64_t t = 0; t < nthreads; ++t) {
    std::int64_t lo = t * per;
    std::int64_t hi = std::min(n, lo + per);
    if (lo >= hi) break;
    pool.emplace_back(body, lo, hi);
  }
  for (auto& th : pool) th.join();
}

}  // namespace tensornet
