#pragma once

#include <utility>
#include <vector>

#include "gebd/mat.hpp"

namespace gebd {

// Optimal one-to-one assignment of size min(rows, cols) minimizing total
// cost. Works on rectangular matrices and negative costs. Returns (row, col)
// pairs sorted by row; an empty matrix yields an empty assignment. When
// several assignments share the optimal total cost, which one is returned is
// unspecified.
std::vector<std::pair<int, int>> hungarian(const Mat& cost);

double assignment_cost(const Mat& cost, const std::vector<std::pair<int, int>>& assignment);

} // namespace gebd
