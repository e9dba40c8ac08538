#pragma once

// Dense numeric kernels behind the tensor primitives.
//
// Every kernel exists twice: `serial::` is the plain reference loop and
// `parallel::` the OpenMP version. Both compute each output element with the
// same summation order, so their results agree bitwise; tests hold them to it.
// The unqualified entry points dispatch to one or the other.

#include <cstddef>
#include <span>

namespace mega::kernels {

// C[m x n] = A[m x k] * B[k x n], all row-major.
// out[i] = in[index[i]] for rows of width `cols`.
// out[index[i]] += in[i]; `out` must be zeroed by the caller.

namespace serial {
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void transpose(std::span<const double> in, std::span<double> out, std::size_t rows,
               std::size_t cols);
void gather_rows(std::span<const double> in, std::span<const std::size_t> index,
                 std::span<double> out, std::size_t cols);
void scatter_add_rows(std::span<const double> in, std::span<const std::size_t> index,
                      std::span<double> out, std::size_t cols);
}  // namespace serial

namespace parallel {
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void transpose(std::span<const double> in, std::span<double> out, std::size_t rows,
               std::size_t cols);
void gather_rows(std::span<const double> in, std::span<const std::size_t> index,
                 std::span<double> out, std::size_t cols);
void scatter_add_rows(std::span<const double> in, std::span<const std::size_t> index,
                      std::span<double> out, std::size_t cols);
}  // namespace parallel

// Dispatch switch; defaults to parallel when built with OpenMP.
void set_parallel(bool enabled);
bool parallel_enabled();
int max_threads();

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void transpose(std::span<const double> in, std::span<double> out, std::size_t rows,
               std::size_t cols);
void gather_rows(std::span<const double> in, std::span<const std::size_t> index,
                 std::span<double> out, std::size_t cols);
void scatter_add_rows(std::span<const double> in, std::span<const std::size_t> index,
                      std::span<double> out, std::size_t cols);

}  // namespace mega::kernels
