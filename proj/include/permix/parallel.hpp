#ifndef PERMIX_PARALLEL_HPP
#define PERMIX_PARALLEL_HPP

#include <cstddef>
#include <thread>
#include <vector>

namespace permix {

// Run fn(i) for i in [0, count) across n_threads with a static block split.
// Each index is processed exactly once by exactly one thread, so workers that
// write to disjoint preallocated slots produce results independent of the
// thread count.
template <typename Fn>
void parallel_for(std::size_t count, unsigned n_threads, Fn&& fn) {
    if (n_threads <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    if (n_threads > count) n_threads = static_cast<unsigned>(count);
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    const std::size_t chunk = (count + n_threads - 1) / n_threads;
    for (unsigned t = 0; t < n_threads; ++t) {
        const std::size_t lo = static_cast<std::size_t>(t) * chunk;
        const std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

// Sum with a fixed pairwise reduction tree. The association order depends only
// on the element count, never on thread scheduling, so totals are bitwise
// reproducible (and more accurate than a left fold).
inline double pairwise_sum(const double* data, std::size_t count) {
    if (count == 0) return 0.0;
    if (count <= 8) {
        double s = data[0];
        for (std::size_t i = 1; i < count; ++i) s += data[i];
        return s;
    }
    const std::size_t half = count / 2;
    return pairwise_sum(data, half) + pairwise_sum(data + half, count - half);
}

inline double pairwise_sum(const std::vector<double>& v) {
    return pairwise_sum(v.data(), v.size());
}

} // namespace permix

#endif
