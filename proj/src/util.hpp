#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace tmld {

inline unsigned default_jobs() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

// Run fn(i) for i in [0, n) on up to `jobs` worker threads. Tasks are handed
// out in fixed index order; each task writes only to its own slot, so results
// are independent of scheduling. Exceptions are rethrown on the caller.
void parallel_for(size_t n, unsigned jobs, const std::function<void(size_t)>& fn);

// Pairwise summation in a fixed order; deterministic regardless of threading.
double pairwise_sum(const double* x, size_t n);

inline double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }

// Running mean/variance accumulator (Welford).
struct RunningStats {
  size_t n = 0;
  double mean = 0;
  double m2 = 0;

  void add(double x) {
    ++n;
    double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
};

}  // namespace tmld
