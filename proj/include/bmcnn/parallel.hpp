#pragma once

#include <cstddef>
#include <functional>

namespace bmcnn {

/// Worker count used by parallel_for. Defaults to $BMCNN_THREADS, else hardware concurrency.
int num_threads();
void set_num_threads(int n);

/// Runs body(i) for i in [0, n). Each index is visited exactly once; callers write
/// results into per-index slots and reduce serially, so results never depend on the
/// worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace bmcnn
