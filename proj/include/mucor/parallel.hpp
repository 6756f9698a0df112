#ifndef MUCOR_PARALLEL_HPP
#define MUCOR_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace mucor {

/// Thread cap: MUCOR_THREADS if set (>=1), else hardware concurrency.
inline int max_threads() {
    static const int cached = [] {
        if (const char* env = std::getenv("MUCOR_THREADS")) {
            const int v = std::atoi(env);
            if (v >= 1) return std::min(v, 256);
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(std::min(hw, 16u));
    }();
    return cached;
}

/// Run f(i) for i in [0, n). Safe only when iterations write disjoint
/// slots; results are then bit-identical for any thread count.
template <class F>
void parallel_for(int n, F&& f) {
    const int nt = std::min(max_threads(), n);
    if (nt <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(nt));
    for (int t = 0; t < nt; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                f(i);
            }
        });
    for (auto& th : pool) th.join();
}

}  // namespace mucor

#endif  // MUCOR_PARALLEL_HPP
