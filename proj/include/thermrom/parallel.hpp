#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace thermrom {

// Worker count for embarrassingly parallel loops. Set once at startup; all
// reductions use a fixed summation order, so results never depend on it.
inline int& worker_threads() {
    static int n = 1;
    return n;
}

// Fork-join over [0, n): body(begin, end) on contiguous chunks. Each index is
// visited exactly once and chunks never overlap, so no synchronization is
// needed inside body as long as it only writes its own range.
template <class F>
inline void parallel_for(std::size_t n, F&& body) {
    const int workers = std::max(1, worker_threads());
    if (workers == 1 || n < 4096) {
        body(std::size_t{0}, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers) - 1);
    for (int w = 1; w < workers; ++w) {
        const std::size_t b = std::min(n, chunk * static_cast<std::size_t>(w));
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&body, b, e] { body(b, e); });
    }
    body(std::size_t{0}, std::min(n, chunk));
    for (auto& t : pool) t.join();
}

namespace detail {
constexpr std::size_t kDotBlock = 4096;
}

// Dot product with a fixed 4096-element block order: partial sums are formed
// per block and accumulated left to right. The result is a pure function of
// the inputs, independent of the worker count.
inline double blocked_dot(const double* a, const double* b, std::size_t n) {
    double total = 0.0;
    for (std::size_t base = 0; base < n; base += detail::kDotBlock) {
        const std::size_t end = std::min(n, base + detail::kDotBlock);
        double part = 0.0;
        for (std::size_t i = base; i < end; ++i) part += a[i] * b[i];
        total += part;
    }
    return total;
}

inline double blocked_sum_squares(const double* a, std::size_t n) {
    return blocked_dot(a, a, n);
}

} // namespace thermrom
