#ifndef ETREE_PARALLEL_HPP_
#define ETREE_PARALLEL_HPP_

#include <cstddef>
#include <thread>
#include <vector>

namespace etree {

// Global worker count for the block-parallel loops. 1 = serial.
inline int& worker_count() {
  static int n = 1;
  return n;
}

// Runs fn(i) for i in [0, n). Work items must write to disjoint state; the
// static block partition below then gives bitwise-identical results for any
// worker count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const int workers = worker_count();
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (std::size_t w = 0; w < t; ++w) {
    const std::size_t lo = n * w / t;
    const std::size_t hi = n * (w + 1) / t;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace etree

#endif  // ETREE_PARALLEL_HPP_
