#pragma once

#include <cstddef>
#include <functional>

namespace sdsf {

// Worker count: min(hardware_concurrency, SDSFORGE_THREADS if set), at least 1.
std::size_t thread_count();

// Runs fn(begin, end) over fixed contiguous partitions of [0, n).
// Partitioning depends only on n and thread_count(), never on timing,
// so results are bitwise stable as long as the ranges write disjoint data.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace sdsf
