#include "tnt/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace tnt::parallel {

namespace {

constexpr std::int64_t kMinWorkPerThread = 1 << 18;

int default_threads() {
  int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("TNT_THREADS")) {
    try {
      int cap = std::stoi(env);
      if (cap >= 1) return std::min(hw, cap);
    } catch (...) {
    }
  }
  return hw;
}

std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{default_threads()};
  return cap;
}

}  // namespace

int max_threads() { return thread_cap().load(); }

void set_max_threads(int threads) { thread_cap().store(std::max(1, threads)); }

void for_range(std::int64_t count, std::int64_t work,
               const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (count <= 0) return;
  std::int64_t threads = std::min<std::int64_t>(max_threads(), count);
  threads = std::min<std::int64_t>(threads, std::max<std::int64_t>(1, work / kMinWorkPerThread));
  if (threads <= 1) {
    fn(0, count);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(threads - 1));
  const std::int64_t chunk = (count + threads - 1) / threads;
  for (std::int64_t t = 1; t < threads; ++t) {
    const std::int64_t b = t * chunk;
    const std::int64_t e = std::min(count, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(0, std::min(count, chunk));
}

}  // namespace tnt::parallel
