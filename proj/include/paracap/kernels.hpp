#pragma once

#include <cstddef>
#include <span>

// Dense kernels used by the alignment, metric and ordering code. Every kernel
// has a serial reference and an OpenMP variant; both compute each output
// element with the same summation order, so results are bitwise equal.
namespace paracap::kernels {

/// C (m x n) = A (m x k) * B (k x n), row-major. C is overwritten.
void matmul_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_omp(std::span<const double> a, std::span<const double> b, std::span<double> c,
                std::size_t m, std::size_t k, std::size_t n, int jobs);

/// Pairwise cosine similarity between the rows of U (m x d) and V (n x d).
/// Rows with zero norm produce similarity 0.
void cosine_matrix_serial(std::span<const double> u, std::span<const double> v, std::span<double> out,
                          std::size_t m, std::size_t n, std::size_t d);
void cosine_matrix_omp(std::span<const double> u, std::span<const double> v, std::span<double> out,
                       std::size_t m, std::size_t n, std::size_t d, int jobs);

}  // namespace paracap::kernels
