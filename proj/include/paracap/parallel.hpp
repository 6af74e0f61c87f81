#pragma once

#include <cstddef>
#include <exception>
#include <span>
#include <string>
#include <vector>

#include "paracap/diag.hpp"

namespace paracap {

/// Number of worker threads the OpenMP runtime would use by default.
int default_jobs();

namespace detail {
// Runs body(i) for i in [0, n) on up to `jobs` OpenMP threads.
void omp_for(std::size_t n, int jobs, void (*body)(void*, std::size_t), void* ctx);
}  // namespace detail

/// Serial reference for parallel_for: the order every parallel result must match.
template <class Fn>
void serial_for(std::size_t n, Fn&& fn) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
}

/// Per-index map over [0, n). Each index must only write its own output slot.
/// Warnings raised inside tasks are replayed on the caller in index order and
/// the exception of the lowest failing index is rethrown, so the observable
/// behaviour is identical to serial_for for any job count.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    if (jobs <= 1 || n <= 1) {
        serial_for(n, fn);
        return;
    }
    struct Slot {
        std::vector<std::string> warnings;
        std::exception_ptr error;
    };
    std::vector<Slot> slots(n);
    struct Ctx {
        Fn* fn;
        std::vector<Slot>* slots;
    } ctx{&fn, &slots};
    detail::omp_for(
        n, jobs,
        [](void* raw, std::size_t i) {
            auto* c = static_cast<Ctx*>(raw);
            WarningCapture capture;
            try {
                (*c->fn)(i);
            } catch (...) {
                (*c->slots)[i].error = std::current_exception();
            }
            (*c->slots)[i].warnings = capture.messages();
        },
        &ctx);
    for (auto& slot : slots) {
        for (const auto& w : slot.warnings) warn(w);
        if (slot.error) std::rethrow_exception(slot.error);
    }
}

}  // namespace paracap
