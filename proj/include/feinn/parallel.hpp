#pragma once

#include <cstdint>
#include <functional>

namespace feinn {

/// Global worker count for batched loops (1 = strictly sequential).
void set_thread_count(int n);
int thread_count();

/// Runs fn(begin, end) over a partition of [0, n). With thread_count() == 1
/// this is a plain call; otherwise chunks run on a small thread group.
/// Chunks are disjoint index ranges, so writes to per-index slots are safe
/// and bitwise-reproducible for any thread count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

} // namespace feinn
