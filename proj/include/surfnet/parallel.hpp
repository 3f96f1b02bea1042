#pragma once

#include <cstddef>
#include <functional>

namespace surfnet {

/// Number of worker threads used by internal loops. Reads SURFNET_THREADS
/// once; defaults to 1 (serial).
int thread_count();

/// Runs body(begin, end) over disjoint contiguous chunks of [0, n). Each
/// index is visited by exactly one chunk, so loops whose iterations write
/// disjoint outputs stay bit-identical regardless of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 256);

}  // namespace surfnet
