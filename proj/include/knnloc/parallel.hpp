#pragma once

#include <cstddef>
#include <functional>

namespace knnloc {

//! Worker count used by parallel_for. Defaults to the KNNLOC_THREADS
//! environment variable when set, otherwise std::thread::hardware_concurrency.
std::size_t num_threads();
void set_num_threads(std::size_t n);

//! Runs body(i) for i in [0, n). Each index is handled exactly once; callers
//! write into per-index slots and reduce afterwards in index order, so results
//! never depend on the worker count. Calls nested inside a parallel_for body
//! run serially on the calling worker. If bodies throw, the exception from the
//! lowest failing index is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace knnloc
