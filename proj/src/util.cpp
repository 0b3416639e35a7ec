#include "util.hpp"

#include <atomic>
#include <exception>
#include <mutex>

namespace tmld {

void parallel_for(size_t n, unsigned jobs, const std::function<void(size_t)>& fn) {
  if (n == 0) return;
  if (jobs <= 1 || n == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mtx;
  unsigned nworkers = static_cast<unsigned>(std::min<size_t>(jobs, n));
  std::vector<std::thread> workers;
  workers.reserve(nworkers);
  for (unsigned w = 0; w < nworkers; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mtx);
          if (!err) err = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (err) std::rethrow_exception(err);
}

double pairwise_sum(const double* x, size_t n) {
  if (n == 0) return 0.0;
  if (n <= 16) {
    double s = 0;
    for (size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

}  // namespace tmld
