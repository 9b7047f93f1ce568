#pragma once

#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace gssm {

/// Worker count: explicit flag value, or the GSSM_WORKERS environment
/// variable, or 1.
inline int resolve_workers(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("GSSM_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

// Deterministic parallel map: static index assignment, results collected by
// position, so the reduction order never depends on thread scheduling.
template <typename Out, typename Fn>
std::vector<Out> parallel_map(size_t count, int workers, Fn fn) {
  std::vector<Out> results(count);
  if (workers <= 1 || count <= 1) {
    for (size_t i = 0; i < count; ++i) results[i] = fn(i);
    return results;
  }
  const int n = std::min<int>(workers, static_cast<int>(count));
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (int w = 0; w < n; ++w) {
    pool.emplace_back([&, w] {
      for (size_t i = w; i < count; i += n) results[i] = fn(i);
    });
  }
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace gssm
