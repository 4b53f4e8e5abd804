#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include <Eigen/Core>

namespace psn {

/// Below this element count kernels stay on the calling thread.
inline constexpr std::size_t kParallelGrain = std::size_t{1} << 16;

/// Cap for kernel-internal threads. 0 keeps the runtime default.
inline void set_num_threads(int n)
{
    if (n <= 0)
        return;
#if defined(_OPENMP)
    omp_set_num_threads(n);
#endif
    Eigen::setNbThreads(n);
}

inline int num_threads()
{
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

/// Thread count from PSN_THREADS, or 0 when unset/invalid.
inline int threads_from_env()
{
    const char* v = std::getenv("PSN_THREADS");
    if (!v)
        return 0;
    try {
        return std::max(0, std::stoi(v));
    } catch (...) {
        return 0;
    }
}

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn)
{
#if defined(_OPENMP)
    if (n >= kParallelGrain && omp_get_max_threads() > 1) {
        const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < sn; ++i)
            fn(static_cast<std::size_t>(i));
        return;
    }
#endif
    for (std::size_t i = 0; i < n; ++i)
        fn(i);
}

} // namespace psn
