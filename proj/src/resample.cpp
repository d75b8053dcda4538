// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/resample.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vqt {

namespace {

constexpr int kTableDensity = 512;  // table points per input sample

double kernel_value(double x, double cutoff, double half_width, double beta, double i0_beta) {
  const double arg = 2.0 * cutoff * x;
  const double sinc =
      arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
  const double r = x / half_width;
  const double win = r * r < 1.0 ? std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r)) / i0_beta : 0.0;
  return 2.0 * cutoff * sinc * win;
}

}  // namespace

std::vector<double> resample(std::span<const double> input, double from_rate,
                             double to_rate, const ResampleQuality& q) {
  if (!(from_rate > 0) || !(to_rate > 0)) {
    throw std::invalid_argument("resample: rates must be positive");
  }
  if (from_rate == to_rate) return {input.begin(), input.end()};
  const double ratio = to_rate / from_rate;
  const auto out_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(input.size()) * ratio));
  // Cutoff in cycles per input sample.
  const double cutoff = 0.5 * q.rolloff * std::min(1.0, ratio);
  const double half_width = q.zero_crossings / (2.0 * cutoff);
  const double i0_beta = std::cyl_bessel_i(0.0, q.kaiser_beta);

  // Symmetric kernel tabulated on [0, half_width], linearly interpolated.
  const auto table_len = static_cast<std::size_t>(std::ceil(half_width * kTableDensity)) + 2;
  std::vector<double> table(table_len);
  for (std::size_t i = 0; i < table_len; ++i) {
    table[i] = kernel_value(static_cast<double>(i) / kTableDensity, cutoff, half_width,
                            q.kaiser_beta, i0_beta);
  }

  std::vector<double> out(out_len, 0.0);
  const auto n = static_cast<std::ptrdiff_t>(input.size());
  for (std::size_t m = 0; m < out_len; ++m) {
    const double center = static_cast<double>(m) / ratio;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(center - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(n - 1, static_cast<std::ptrdiff_t>(std::floor(center + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const double pos = std::fabs(static_cast<double>(k) - center) * kTableDensity;
      const auto idx = static_cast<std::size_t>(pos);
      if (idx + 1 >= table_len) continue;
      const double frac = pos - static_cast<double>(idx);
      acc += input[k] * (table[idx] + frac * (table[idx + 1] - table[idx]));
    }
    out[m] = acc;
  }
  return out;
}

}  // namespace vqt
