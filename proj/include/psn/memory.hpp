#pragma once

// Allocation accounting for tensor buffers. Every data and gradient buffer
// owned by a Tensor goes through TrackedAllocator, so live/peak byte counts
// reflect exactly what the autodiff engine keeps resident.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <new>
#include <type_traits>
#include <vector>

namespace psn::memory {

struct Counters {
    std::atomic<std::int64_t> live{0};
    std::atomic<std::int64_t> peak{0};
    std::atomic<std::uint64_t> allocations{0};
};

inline Counters& counters() noexcept
{
    static Counters c;
    return c;
}

inline void note_alloc(std::size_t bytes) noexcept
{
    auto& c = counters();
    const auto now = c.live.fetch_add(static_cast<std::int64_t>(bytes)) + static_cast<std::int64_t>(bytes);
    auto prev = c.peak.load();
    while (now > prev && !c.peak.compare_exchange_weak(prev, now)) {
    }
    c.allocations.fetch_add(1);
}

inline void note_free(std::size_t bytes) noexcept
{
    counters().live.fetch_sub(static_cast<std::int64_t>(bytes));
}

inline std::int64_t live_bytes() noexcept { return counters().live.load(); }
inline std::int64_t peak_bytes() noexcept { return counters().peak.load(); }
inline std::uint64_t allocation_count() noexcept { return counters().allocations.load(); }

/// Restart peak tracking from the current live level.
inline void reset_peak() noexcept { counters().peak.store(counters().live.load()); }

/// Allocator that feeds the counters above. Elements are default-initialized
/// rather than value-initialized so kernels that overwrite their output do not
/// pay for a zero fill first.
template <class T>
struct TrackedAllocator {
    using value_type = T;

    TrackedAllocator() noexcept = default;
    template <class U>
    TrackedAllocator(const TrackedAllocator<U>&) noexcept
    {
    }

    T* allocate(std::size_t n)
    {
        auto* p = std::allocator<T>{}.allocate(n);
        note_alloc(n * sizeof(T));
        return p;
    }

    void deallocate(T* p, std::size_t n) noexcept
    {
        note_free(n * sizeof(T));
        std::allocator<T>{}.deallocate(p, n);
    }

    template <class U>
    void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>)
    {
        ::new (static_cast<void*>(p)) U;
    }

    template <class U, class... Args>
    void construct(U* p, Args&&... args)
    {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }

    template <class U>
    bool operator==(const TrackedAllocator<U>&) const noexcept
    {
        return true;
    }
};

template <class T>
using Buffer = std::vector<T, TrackedAllocator<T>>;

} // namespace psn::memory
