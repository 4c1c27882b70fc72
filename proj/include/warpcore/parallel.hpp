#pragma once

#include <cstddef>
#include <functional>

namespace warpcore {

/// Worker count used by the resampling engine. Defaults to the value of
/// WARPCORE_THREADS when set, otherwise the hardware concurrency.
int num_threads();
void set_num_threads(int n);

/// Runs fn(begin, end) over contiguous chunks of [0, count). Chunks are a
/// pure function of (count, num_threads()) and each index is visited exactly
/// once, so callers writing disjoint outputs get identical results for any
/// thread count. Calls made from inside a worker run inline.
void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace warpcore
