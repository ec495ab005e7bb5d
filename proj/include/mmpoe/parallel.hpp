#pragma once

#include <cstddef>
#include <string_view>

#include <omp.h>

namespace mmpoe {

/// Execution policy for the data-parallel kernels. Every kernel keeps a serial
/// reference path; the parallel path writes into per-index slots and reduces
/// them in index order, so both paths produce bit-identical results.
enum class Exec { kSerial, kParallel };

std::string_view to_string(Exec exec);

/// Calls body(i) for every i in [0, n).
template <class Body>
void for_each_index(std::size_t n, Exec exec, Body&& body) {
  if (exec == Exec::kSerial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
}

/// Number of OpenMP threads the parallel path will use.
int thread_count();

/// Sets the OpenMP thread count; values < 1 leave the runtime default.
void set_thread_count(int threads);

}  // namespace mmpoe
