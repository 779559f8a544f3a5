#pragma once

#include <functional>

namespace rtlod {

/// Runs body(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). The first exception in index order is rethrown after all
/// workers have stopped. Bodies must write only to slots owned by i.
void parallel_for(int n, int threads, const std::function<void(int)>& body);

int resolve_threads(int threads);

}  // namespace rtlod
