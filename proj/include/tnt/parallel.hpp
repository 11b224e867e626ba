#pragma once

#include <cstdint>
#include <functional>

namespace tnt::parallel {

// Worker cap: TNT_THREADS when set, else the hardware concurrency.
int max_threads();
void set_max_threads(int threads);

// Runs fn(begin, end) over a static partition of [0, count). Each index is
// visited by exactly one worker, so per-index results do not depend on the
// thread count. `work` is a cost estimate used to stay serial on small jobs.
void for_range(std::int64_t count, std::int64_t work,
               const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace tnt::parallel
