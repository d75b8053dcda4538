// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vqt {

std::vector<double> unit_range(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
  return out;
}

DtwResult dtw_raw(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("dtw: empty series");
  const std::size_t m = a.size(), n = b.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Lexicographic (cost, length) per cell; step 0 = diagonal, 1 = from i-1, 2 = from j-1.
  std::vector<double> cost(m * n, kInf);
  std::vector<std::size_t> len(m * n, 0);
  std::vector<unsigned char> step(m * n, 0);
  auto at = [n](std::size_t i, std::size_t j) { return i * n + j; };
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double c = std::fabs(a[i] - b[j]);
      if (i == 0 && j == 0) {
        cost[0] = c;
        len[0] = 1;
        continue;
      }
      double best = kInf;
      std::size_t best_len = 0;
      unsigned char best_step = 0;
      auto consider = [&](std::size_t pi, std::size_t pj, unsigned char s) {
        const double pc = cost[at(pi, pj)];
        const std::size_t pl = len[at(pi, pj)];
        if (pc < best || (pc == best && pl < best_len)) {
          best = pc;
          best_len = pl;
          best_step = s;
        }
      };
      if (i > 0 && j > 0) consider(i - 1, j - 1, 0);
      if (i > 0) consider(i - 1, j, 1);
      if (j > 0) consider(i, j - 1, 2);
      cost[at(i, j)] = best + c;
      len[at(i, j)] = best_len + 1;
      step[at(i, j)] = best_step;
    }
  }
  DtwResult r;
  r.cost = cost[at(m - 1, n - 1)];
  std::size_t i = m - 1, j = n - 1;
  r.path.emplace_back(i, j);
  while (i != 0 || j != 0) {
    switch (step[at(i, j)]) {
      case 0: --i; --j; break;
      case 1: --i; break;
      default: --j; break;
    }
    r.path.emplace_back(i, j);
  }
  std::reverse(r.path.begin(), r.path.end());
  r.distance = r.cost / static_cast<double>(r.path.size());
  return r;
}

DtwResult dtw(std::span<const double> a, std::span<const double> b) {
  auto sa = unit_range(a);
  auto sb = unit_range(b);
  return dtw_raw(sa, sb);
}

}  // namespace vqt
