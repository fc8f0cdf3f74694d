#pragma once

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

// OpenMP plumbing. Every parallel kernel in this library computes
// per-element results independently and merges them in element order, so
// parallel output is bit-identical to the serial reference path; tests
// assert this.

namespace holo::parallel {

/// Execution policy for the data-parallel kernels. Serial is the reference
/// path kept for testing and benchmarking.
enum class Policy { Serial, Parallel };

/// Thread cap: HOLONOMY_LAB_THREADS when set and >= 1, otherwise the
/// OpenMP default. Always 1 without OpenMP.
inline int max_threads() {
#ifdef _OPENMP
  if (const char* env = std::getenv("HOLONOMY_LAB_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline int thread_count(Policy policy) {
  return policy == Policy::Parallel ? max_threads() : 1;
}

}  // namespace holo::parallel
