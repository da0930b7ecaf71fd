#pragma once

// Row-parallel helpers. All reductions go through per-row partials that are
// combined serially in row order, so results are bitwise reproducible for any
// thread count.

#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace heflow {

template <class F>
inline void for_rows(int ny, F&& body) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int y = 0; y < ny; ++y) body(y);
}

// Reduction: body(y) returns a partial value; partials are summed in row order.
template <class F>
inline double sum_rows(int ny, F&& body) {
  std::vector<double> partial(static_cast<size_t>(ny), 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int y = 0; y < ny; ++y) partial[static_cast<size_t>(y)] = body(y);
  double total = 0.0;
  for (int y = 0; y < ny; ++y) total += partial[static_cast<size_t>(y)];
  return total;
}

template <class F>
inline double max_rows(int ny, F&& body) {
  std::vector<double> partial(static_cast<size_t>(ny), 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int y = 0; y < ny; ++y) partial[static_cast<size_t>(y)] = body(y);
  double m = 0.0;
  for (int y = 0; y < ny; ++y) m = partial[static_cast<size_t>(y)] > m ? partial[static_cast<size_t>(y)] : m;
  return m;
}

}  // namespace heflow
