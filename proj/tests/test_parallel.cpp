#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "paracap/diag.hpp"
#include "paracap/kernels.hpp"
#include "paracap/parallel.hpp"

using namespace paracap;

namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> d;
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

}  // namespace

TEST_SUITE("parallel") {
    TEST_CASE("parallel_for matches serial_for") {
        for (int jobs : {1, 2, 4, 7}) {
            std::vector<double> a(257), b(257);
            serial_for(a.size(), [&](std::size_t i) { a[i] = std::sin(static_cast<double>(i)); });
            parallel_for(b.size(), jobs, [&](std::size_t i) { b[i] = std::sin(static_cast<double>(i)); });
            CHECK(a == b);
        }
        int calls = 0;
        parallel_for(0, 4, [&](std::size_t) { ++calls; });
        CHECK(calls == 0);
    }

    TEST_CASE("the lowest failing index wins") {
        for (int jobs : {1, 3, 8}) {
            try {
                parallel_for(50, jobs, [](std::size_t i) {
                    if (i == 17 || i == 31 || i == 44) throw std::runtime_error("fail " + std::to_string(i));
                });
                FAIL("expected an exception");
            } catch (const std::runtime_error& e) {
                CHECK(std::string(e.what()) == "fail 17");
            }
        }
    }

    TEST_CASE("warnings are replayed in index order") {
        for (int jobs : {1, 4}) {
            WarningCapture capture;
            parallel_for(20, jobs, [](std::size_t i) {
                if (i % 3 == 0) warn("w" + std::to_string(i));
            });
            std::vector<std::string> want;
            for (int i = 0; i < 20; i += 3) want.push_back("w" + std::to_string(i));
            CHECK(capture.messages() == want);
        }
    }

    TEST_CASE("matmul: OpenMP equals serial bitwise") {
        std::mt19937_64 rng(3);
        const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {17, 64, 9}, {64, 64, 64}};
        for (const auto& shape : shapes) {
            const std::size_t m = shape[0], k = shape[1], n = shape[2];
            const auto a = random_values(m * k, rng);
            const auto b = random_values(k * n, rng);
            std::vector<double> cs(m * n, -1.0), co(cs.size(), -2.0);
            kernels::matmul_serial(a, b, cs, m, k, n);
            kernels::matmul_omp(a, b, co, m, k, n, 4);
            CHECK(cs == co);
            double naive = 0;
            for (std::size_t t = 0; t < k; ++t) naive += a[t] * b[t * n];
            CHECK(cs[0] == doctest::Approx(naive).epsilon(1e-12));
        }
    }

    TEST_CASE("cosine matrix: OpenMP equals serial bitwise, zero rows give 0") {
        std::mt19937_64 rng(4);
        const std::size_t m = 13, n = 29, d = 16;
        auto u = random_values(m * d, rng);
        const auto v = random_values(n * d, rng);
        std::fill(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(d), 0.0);
        std::vector<double> s(m * n), o(m * n);
        kernels::cosine_matrix_serial(u, v, s, m, n, d);
        kernels::cosine_matrix_omp(u, v, o, m, n, d, 3);
        CHECK(s == o);
        for (std::size_t j = 0; j < n; ++j) CHECK(s[j] == 0.0);
        for (double x : s) CHECK(std::abs(x) <= 1.0);
    }
}
