#include "mega/kernels.hpp"

#include <algorithm>
#include <atomic>

#ifdef MEGA_HAVE_OPENMP
#include <omp.h>
#endif

namespace mega::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 14;

#ifdef MEGA_HAVE_OPENMP
std::atomic<bool> g_parallel{true};
#else
std::atomic<bool> g_parallel{false};
#endif

}  // namespace

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void transpose(std::span<const double> in, std::span<double> out, std::size_t rows,
               std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = in[i * cols + j];
}

void gather_rows(std::span<const double> in, std::span<const std::size_t> index,
                 std::span<double> out, std::size_t cols) {
  for (std::size_t i = 0; i < index.size(); ++i)
    std::copy_n(in.data() + index[i] * cols, cols, out.data() + i * cols);
}

void scatter_add_rows(std::span<const double> in, std::span<const std::size_t> index,
                      std::span<double> out, std::size_t cols) {
  for (std::size_t i = 0; i < index.size(); ++i) {
    const double* src = in.data() + i * cols;
    double* dst = out.data() + index[i] * cols;
    for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
  }
}

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
  const bool big = m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void transpose(std::span<const double> in, std::span<double> out, std::size_t rows,
               std::size_t cols) {
  const auto r = static_cast<std::ptrdiff_t>(rows);
  const bool big = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t ii = 0; ii < r; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = in[i * cols + j];
  }
}

void gather_rows(std::span<const double> in, std::span<const std::size_t> index,
                 std::span<double> out, std::size_t cols) {
  const auto count = static_cast<std::ptrdiff_t>(index.size());
  const bool big = index.size() * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t ii = 0; ii < count; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    std::copy_n(in.data() + index[i] * cols, cols, out.data() + i * cols);
  }
}

// Rows may collide on the same target, so threads split the column range
// instead. Each output element still sees its contributions in input order.
void scatter_add_rows(std::span<const double> in, std::span<const std::size_t> index,
                      std::span<double> out, std::size_t cols) {
  const bool big = index.size() * cols >= kParallelWork && cols > 1;
#pragma omp parallel if (big)
  {
    std::size_t begin = 0;
    std::size_t end = cols;
#ifdef MEGA_HAVE_OPENMP
    const auto nthreads = static_cast<std::size_t>(omp_get_num_threads());
    const auto tid = static_cast<std::size_t>(omp_get_thread_num());
    const std::size_t chunk = (cols + nthreads - 1) / nthreads;
    begin = std::min(cols, tid * chunk);
    end = std::min(cols, begin + chunk);
#endif
    for (std::size_t i = 0; i < index.size(); ++i) {
      const double* src = in.data() + i * cols;
      double* dst = out.data() + index[i] * cols;
      for (std::size_t j = begin; j < end; ++j) dst[j] += src[j];
    }
  }
}

}  // namespace parallel

void set_parallel(bool enabled) {
#ifdef MEGA_HAVE_OPENMP
  g_parallel = enabled;
#else
  (void)enabled;
#endif
}

bool parallel_enabled() { return g_parallel; }

int max_threads() {
#ifdef MEGA_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  if (g_parallel)
    parallel::matmul(a, b, c, m, k, n);
  else
    serial::matmul(a, b, c, m, k, n);
}

void transpose(std::span<const double> in, std::span<double> out, std::size_t rows,
               std::size_t cols) {
  if (g_parallel)
    parallel::transpose(in, out, rows, cols);
  else
    serial::transpose(in, out, rows, cols);
}

void gather_rows(std::span<const double> in, std::span<const std::size_t> index,
                 std::span<double> out, std::size_t cols) {
  if (g_parallel)
    parallel::gather_rows(in, index, out, cols);
  else
    serial::gather_rows(in, index, out, cols);
}

void scatter_add_rows(std::span<const double> in, std::span<const std::size_t> index,
                      std::span<double> out, std::size_t cols) {
  if (g_parallel)
    parallel::scatter_add_rows(in, index, out, cols);
  else
    serial::scatter_add_rows(in, index, out, cols);
}

}  // namespace mega::kernels
