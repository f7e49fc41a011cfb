#pragma once

#include <cstddef>
#include <exception>

namespace imagine {

/// Runs body(i) for i in [0, n) across OpenMP threads and rethrows the first
/// failure. Iterations must be independent.
template <typename F>
void parallel_for(std::size_t n, F&& body, std::size_t chunk = 16) {
  std::exception_ptr failure;
  const auto c = static_cast<int>(chunk);
#pragma omp parallel for schedule(dynamic, c)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
#pragma omp critical(imagine_parallel_for_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace imagine
