#pragma once

#include <functional>

namespace diffant {

// Worker count: DIFFANT_THREADS if set (clamped to >=1), otherwise hardware concurrency.
int worker_count();

// Runs fn(i) for i in [0, n). Splits into contiguous chunks across workers; falls back to a
// plain loop when a single worker is available. fn must only write to index-addressed slots.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace diffant
