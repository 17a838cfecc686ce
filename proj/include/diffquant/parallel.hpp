#pragma once

#include <cstdint>

namespace diffquant {

// Process-wide worker count. Initialized from DIFFQUANT_THREADS (falls back
// to 1 when unset or invalid). All parallel loops split work over independent
// output elements only, so any thread count produces bit-identical results.
int thread_count();
void set_thread_count(int n);

namespace detail {
void parallel_for_impl(std::int64_t n, void* ctx, void (*body)(void*, std::int64_t));
}

// Runs f(i) for i in [0, n). f must not touch state shared across iterations.
template <typename F>
void parallel_for(std::int64_t n, F&& f) {
    detail::parallel_for_impl(n, &f, [](void* ctx, std::int64_t i) {
        (*static_cast<F*>(ctx))(i);
    });
}

}  // namespace diffquant
