#pragma once

#include <functional>

namespace mtsp {

/// `threads` if positive, otherwise the hardware concurrency (at least 1).
int resolve_threads(int threads);

/// Runs f(0), ..., f(count - 1) on up to `threads` workers. Rethrows the
/// first exception after all workers stop.
void parallel_for(int count, int threads, const std::function<void(int)>& f);

}  // namespace mtsp
