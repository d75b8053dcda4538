// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace vqt {

struct DtwResult {
  double distance = 0.0;  // cost / path length
  double cost = 0.0;      // accumulated |a_i - b_j| along the path
  std::vector<std::pair<std::size_t, std::size_t>> path;
};

/// Min-max scales `values` to [0, 1]; a constant series maps to all zeros.
std::vector<double> unit_range(std::span<const double> values);

/// Classic DTW with steps (1,0), (0,1), (1,1) and absolute-difference cost on
/// unit-range-scaled copies of both series. Among paths of equal minimal cost
/// the shortest wins, then the diagonal step. Both series must be non-empty.
DtwResult dtw(std::span<const double> a, std::span<const double> b);

/// Same alignment without the unit-range scaling.
DtwResult dtw_raw(std::span<const double> a, std::span<const double> b);

}  // namespace vqt
