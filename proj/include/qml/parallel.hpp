#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace qml {

namespace detail {
inline int& thread_override() {
  static int value = 0;
  return value;
}
}  // namespace detail

/// Worker count: an explicit override, else QML_THREADS, else the hardware concurrency.
inline int thread_count() {
  if (detail::thread_override() > 0) return detail::thread_override();
  if (const char* env = std::getenv("QML_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline void set_thread_count(int n) { detail::thread_override() = std::max(0, n); }

/// Runs body(i) for i in [begin, end) over contiguous static chunks.
/// Each index must write only its own outputs, so results do not depend on the worker count.
template <typename Body>
void parallel_for(Eigen::Index begin, Eigen::Index end, Body&& body) {
  const Eigen::Index n = end - begin;
  if (n <= 0) return;
  const Eigen::Index workers = std::min<Eigen::Index>(thread_count(), n);
  if (workers <= 1) {
    for (Eigen::Index i = begin; i < end; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (Eigen::Index w = 0; w < workers; ++w) {
    const Eigen::Index lo = begin + n * w / workers;
    const Eigen::Index hi = begin + n * (w + 1) / workers;
    pool.emplace_back([&, lo, hi] {
      try {
        for (Eigen::Index i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace qml
