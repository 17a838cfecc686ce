#include "diffquant/parallel.hpp"

#include <atomic>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace diffquant {

namespace {

int initial_thread_count() {
    const char* env = std::getenv("DIFFQUANT_THREADS");
    if (env != nullptr) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

std::atomic<int>& thread_count_slot() {
    static std::atomic<int> count{initial_thread_count()};
    return count;
}

}  // namespace

int thread_count() { return thread_count_slot().load(std::memory_order_relaxed); }

void set_thread_count(int n) {
    if (n < 1) n = 1;
    thread_count_slot().store(n, std::memory_order_relaxed);
}

namespace detail {

void parallel_for_impl(std::int64_t n, void* ctx, void (*body)(void*, std::int64_t)) {
    if (n <= 0) return;
#ifdef _OPENMP
    const int threads = thread_count();
    if (threads > 1 && n > 1) {
#pragma omp parallel for num_threads(threads) schedule(static)
        for (std::int64_t i = 0; i < n; ++i) body(ctx, i);
        return;
    }
#endif
    for (std::int64_t i = 0; i < n; ++i) body(ctx, i);
}

}  // namespace detail

}  // namespace diffquant
