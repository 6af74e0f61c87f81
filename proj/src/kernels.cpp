#include "paracap/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace paracap::kernels {

namespace {

void check_sizes(std::size_t a, std::size_t b, std::size_t c, std::size_t m, std::size_t k,
                 std::size_t n) {
    if (a != m * k || b != k * n || c != m * n) throw std::invalid_argument("matmul: shape mismatch");
}

inline void matmul_row(const double* a, const double* b, double* c, std::size_t k, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) c[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        const double av = a[p];
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
}

std::vector<double> row_norms(std::span<const double> x, std::size_t rows, std::size_t d) {
    std::vector<double> norms(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (std::size_t t = 0; t < d; ++t) s += x[i * d + t] * x[i * d + t];
        norms[i] = std::sqrt(s);
    }
    return norms;
}

inline void cosine_row(const double* u, double un, std::span<const double> v,
                       const std::vector<double>& vn, double* out, std::size_t n, std::size_t d) {
    for (std::size_t j = 0; j < n; ++j) {
        if (un == 0.0 || vn[j] == 0.0) {
            out[j] = 0.0;
            continue;
        }
        double dot = 0.0;
        const double* vr = v.data() + j * d;
        for (std::size_t t = 0; t < d; ++t) dot += u[t] * vr[t];
        out[j] = dot / (un * vn[j]);
    }
}

}  // namespace

void matmul_serial(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
    check_sizes(a.size(), b.size(), c.size(), m, k, n);
    for (std::size_t i = 0; i < m; ++i) matmul_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
}

void matmul_omp(std::span<const double> a, std::span<const double> b, std::span<double> c,
                std::size_t m, std::size_t k, std::size_t n, int jobs) {
    check_sizes(a.size(), b.size(), c.size(), m, k, n);
    const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static) num_threads(jobs)
    for (long long i = 0; i < rows; ++i) {
        const auto r = static_cast<std::size_t>(i);
        matmul_row(a.data() + r * k, b.data(), c.data() + r * n, k, n);
    }
}

void cosine_matrix_serial(std::span<const double> u, std::span<const double> v, std::span<double> out,
                          std::size_t m, std::size_t n, std::size_t d) {
    if (u.size() != m * d || v.size() != n * d || out.size() != m * n)
        throw std::invalid_argument("cosine_matrix: shape mismatch");
    const auto un = row_norms(u, m, d);
    const auto vn = row_norms(v, n, d);
    for (std::size_t i = 0; i < m; ++i) cosine_row(u.data() + i * d, un[i], v, vn, out.data() + i * n, n, d);
}

void cosine_matrix_omp(std::span<const double> u, std::span<const double> v, std::span<double> out,
                       std::size_t m, std::size_t n, std::size_t d, int jobs) {
    if (u.size() != m * d || v.size() != n * d || out.size() != m * n)
        throw std::invalid_argument("cosine_matrix: shape mismatch");
    const auto un = row_norms(u, m, d);
    const auto vn = row_norms(v, n, d);
    const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static) num_threads(jobs)
    for (long long i = 0; i < rows; ++i) {
        const auto r = static_cast<std::size_t>(i);
        cosine_row(u.data() + r * d, un[r], v, vn, out.data() + r * n, n, d);
    }
}

}  // namespace paracap::kernels
