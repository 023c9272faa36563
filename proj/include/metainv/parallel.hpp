#pragma once

#include <cstddef>
#include <functional>

namespace metainv {

/// Worker cap for intra-call parallelism. Reads METAINV_THREADS once; 0 or
/// unset means all hardware cores.
std::size_t max_threads();

/// Runs fn(i) for i in [0, n). Work is split into contiguous index blocks,
/// one per worker. Each index must write only its own outputs; under that
/// contract the result does not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace metainv
