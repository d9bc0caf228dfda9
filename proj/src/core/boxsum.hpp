#pragma once

#include "core/volume.hpp"

#include <vector>

namespace groupreg {

// Separable box sum with edge truncation: out[c] = sum of in over the
// in-grid voxels with Chebyshev distance <= radius from c.
std::vector<double> box_sum(const GridInfo& g, const std::vector<double>& in, int radius);

// Number of in-grid window positions along one axis for center i.
int axis_window_count(int i, int n, int radius);

// Product of the per-axis counts: the in-grid window size at a center.
double window_count(const GridInfo& g, std::size_t flat_index, int radius);

} // namespace groupreg
