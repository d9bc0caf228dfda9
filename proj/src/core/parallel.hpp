#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace groupreg {

// Number of worker threads used by parallel loops. Defaults to the
// hardware concurrency; clamped to >= 1.
void set_thread_count(int n);
int thread_count();

// Runs fn(begin, end) over disjoint chunks of [0, n). Chunking is only a
// scheduling decision: each index is written by exactly one call, so maps
// are bitwise deterministic for any thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

// Deterministic sum reduction: partial sums are computed per fixed-size
// block (independent of the thread count) and combined in block order,
// so the result is bitwise identical for any thread count.
double parallel_sum(std::size_t n, const std::function<double(std::size_t, std::size_t)>& block_sum);

// Sum of n doubles in a canonical (sorted ascending) order: invariant
// under permutation of the inputs. Used for cross-member reductions so
// that group operations are exactly symmetric in member order.
double symmetric_sum(const double* values, int n);

} // namespace groupreg
