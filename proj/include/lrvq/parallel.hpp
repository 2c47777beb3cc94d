#pragma once

#include <cstddef>
#include <functional>

namespace lrvq {

/// Worker count for library-internal parallel loops (>= 1).
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Runs task(i) for i in [0, n_tasks), spread over the configured workers.
/// Tasks must write only to their own outputs; callers reduce in index
/// order so results never depend on the worker count.
void parallel_for(std::size_t n_tasks, const std::function<void(std::size_t)>& task);

}  // namespace lrvq
