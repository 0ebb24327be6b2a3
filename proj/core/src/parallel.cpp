#include "pacs/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace pacs {

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int n) {
    if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    g_threads = n;
}

int num_threads() { return g_threads; }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body, std::size_t chunk) {
    if (n == 0) return;
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t nchunks = (n + chunk - 1) / chunk;
    const int t = static_cast<int>(std::min<std::size_t>(g_threads, nchunks));
    if (t <= 1) {
        for (std::size_t c = 0; c < nchunks; ++c) body(c * chunk, std::min(n, (c + 1) * chunk));
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t c; (c = next.fetch_add(1)) < nchunks;) body(c * chunk, std::min(n, (c + 1) * chunk));
    };
    std::vector<std::jthread> pool;
    for (int i = 1; i < t; ++i) pool.emplace_back(worker);
    worker();
}

double parallel_sum(std::size_t n, const std::function<double(std::size_t, std::size_t)>& body, std::size_t chunk) {
    if (n == 0) return 0.0;
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t nchunks = (n + chunk - 1) / chunk;
    std::vector<double> part(nchunks, 0.0);
    parallel_for(
        nchunks, [&](std::size_t b, std::size_t e) {
            for (std::size_t c = b; c < e; ++c) part[c] = body(c * chunk, std::min(n, (c + 1) * chunk));
        },
        1);
    double s = 0.0;
    for (double p : part) s += p;
    return s;
}

double parallel_max(std::size_t n, const std::function<double(std::size_t, std::size_t)>& body, std::size_t chunk) {
    if (n == 0) return 0.0;
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t nchunks = (n + chunk - 1) / chunk;
    std::vector<double> part(nchunks, 0.0);
    parallel_for(
        nchunks, [&](std::size_t b, std::size_t e) {
            for (std::size_t c = b; c < e; ++c) part[c] = body(c * chunk, std::min(n, (c + 1) * chunk));
        },
        1);
    return *std::max_element(part.begin(), part.end());
}

}  // namespace pacs
