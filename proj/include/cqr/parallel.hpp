#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <vector>

namespace cqr {

/// Worker count from CQR_NUM_WORKERS, else the OpenMP default.
int default_workers();

/// Seed of an independent RNG stream derived from (master, a, b) by
/// SplitMix64 mixing; results never depend on which worker runs the stream.
std::uint64_t stream_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

/// Runs body(i) for i in [0, n) on `workers` OpenMP threads (<= 0 means
/// default_workers()). An exception escaping body is captured per index and
/// the one with the lowest index is rethrown after the loop.
template <class Body>
void parallel_for(std::size_t n, int workers, Body&& body) {
  if (workers <= 0) workers = default_workers();
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Serial reference loop with the same contract as parallel_for.
template <class Body>
void serial_for(std::size_t n, Body&& body) {
  for (std::size_t i = 0; i < n; ++i) body(i);
}

}  // namespace cqr
