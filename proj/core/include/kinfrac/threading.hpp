#ifndef KINFRAC_THREADING_HPP
#define KINFRAC_THREADING_HPP

#include <functional>

namespace kinfrac {

/// Worker-pool count resolution: explicit request > KINFRAC_THREADS env >
/// hardware concurrency (at least 1).
int resolve_threads(int requested = 0);

/// Runs task(i) for i in [0, n_tasks) on up to n_threads workers. Tasks must
/// write results into per-index slots so output is schedule-independent.
/// The first exception thrown by any task is rethrown after all workers join.
void parallel_for(int n_tasks, int n_threads,
                  const std::function<void(int)>& task);

}  // namespace kinfrac

#endif
