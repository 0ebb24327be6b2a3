#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace pacs {

// Worker count used by all pointwise loops. 0 means hardware concurrency.
void set_num_threads(int n);
int num_threads();

// Runs body(begin, end) over fixed-size chunks of [0, n). Chunk boundaries
// depend only on n and chunk, never on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t chunk = 4096);

// Deterministic sum: each chunk is reduced serially, partials are added in
// chunk order.
double parallel_sum(std::size_t n, const std::function<double(std::size_t, std::size_t)>& body,
                    std::size_t chunk = 4096);

double parallel_max(std::size_t n, const std::function<double(std::size_t, std::size_t)>& body,
                    std::size_t chunk = 4096);

}  // namespace pacs
