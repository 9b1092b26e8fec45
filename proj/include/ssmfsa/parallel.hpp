#pragma once

#include <cstddef>
#include <functional>

namespace ssmfsa {

/// Number of workers to use when the caller does not say: SSMFSA_WORKERS if
/// set to a positive integer, else std::thread::hardware_concurrency().
std::size_t default_workers();

/// Runs body(i) for i in [0, count) on up to `workers` threads.
///
/// Work is handed out dynamically, so body must not depend on which thread
/// runs which index. Anything written must go to per-index slots; callers
/// reduce afterwards in index order, which keeps results independent of the
/// worker count. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& body);

}  // namespace ssmfsa
