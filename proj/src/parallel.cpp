#include "paracap/parallel.hpp"

#include <omp.h>

namespace paracap {

int default_jobs() { return omp_get_max_threads(); }

namespace detail {

void omp_for(std::size_t n, int jobs, void (*body)(void*, std::size_t), void* ctx) {
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
    for (long long i = 0; i < count; ++i) body(ctx, static_cast<std::size_t>(i));
}

}  // namespace detail
}  // namespace paracap
