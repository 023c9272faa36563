#include "metainv/parallel.hpp"

#include <cstdlib>
#include <thread>
#include <vector>

namespace metainv {

std::size_t max_threads() {
    static const std::size_t cap = [] {
        if (const char* env = std::getenv("METAINV_THREADS")) {
            long v = std::strtol(env, nullptr, 10);
            if (v > 0) return static_cast<std::size_t>(v);
        }
        std::size_t hw = std::thread::hardware_concurrency();
        return hw ? hw : std::size_t{1};
    }();
    return cap;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(max_threads(), n);
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace metainv
