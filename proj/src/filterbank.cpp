// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/filterbank.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "vqtimbre/ops.hpp"

namespace vqt {

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

double cola_constant(const std::vector<double>& window, std::size_t stride,
                     double* max_deviation) {
  const std::size_t n = window.size();
  std::vector<double> sums(stride, 0.0);
  for (std::size_t phase = 0; phase < stride; ++phase)
    for (std::size_t i = phase; i < n; i += stride) sums[phase] += window[i];
  double mean = 0.0;
  for (double s : sums) mean += s;
  mean /= static_cast<double>(stride);
  if (max_deviation) {
    double dev = 0.0;
    for (double s : sums) dev = std::max(dev, std::fabs(s - mean));
    *max_deviation = dev;
  }
  return mean;
}

std::size_t FilterbankBasis::frame_count(std::size_t samples) const {
  return samples < window ? 0 : (samples - window) / stride + 1;
}

std::size_t FilterbankBasis::output_length(std::size_t frames) const {
  return frames == 0 ? 0 : (frames - 1) * stride + window;
}

FilterbankBasis FilterbankBasis::make(std::size_t window, std::size_t stride) {
  if (window < 2 || window % 2 != 0) {
    throw std::invalid_argument("filterbank window must be even and >= 2, got " +
                                std::to_string(window));
  }
  if (stride == 0 || stride > window) {
    throw std::invalid_argument("filterbank stride must be in [1, window], got " +
                                std::to_string(stride));
  }
  FilterbankBasis b;
  b.window = window;
  b.stride = stride;
  b.hann = hann_window(window);
  b.cola = cola_constant(b.hann, stride);

  const std::size_t half = window / 2 + 1;
  const std::size_t n = 2 * half;
  const double l = static_cast<double>(window);
  std::vector<double> f(n * window), inv(n * window);
  for (std::size_t k = 0; k < half; ++k) {
    const double weight = (k == 0 || k == window / 2) ? 1.0 : 2.0;
    for (std::size_t i = 0; i < window; ++i) {
      // Reduce k*i modulo L before scaling to keep the phase exact.
      const double phase = 2.0 * std::numbers::pi *
                           static_cast<double>((k * i) % window) / l;
      const double c = std::cos(phase), s = std::sin(phase);
      f[k * window + i] = b.hann[i] * c;
      f[(half + k) * window + i] = -b.hann[i] * s;
      inv[k * window + i] = weight * c / l;
      inv[(half + k) * window + i] = -weight * s / l;
    }
  }
  b.analysis = Tensor::from({n, 1, window}, std::move(f));
  b.synthesis = Tensor::from({n, 1, window}, std::move(inv));
  return b;
}

Tensor hann_slice(const Tensor& signal, std::size_t window, std::size_t stride) {
  auto w = hann_window(window);
  return frame_signal(signal, w, stride);
}

ComplexFrames fourier_frames(const Tensor& signal, const FilterbankBasis& basis) {
  if (signal.numel() < basis.window) {
    throw DimensionError("fourier_frames: signal of " + std::to_string(signal.numel()) +
                         " samples is shorter than one window of " +
                         std::to_string(basis.window));
  }
  auto x = reshape(signal, {1, signal.numel()});
  auto spec = conv1d(x, basis.analysis, basis.stride);  // [N x T]
  return ComplexFrames{transpose(spec), basis.stride};
}

Tensor overlap_add(const Tensor& frames, const FilterbankBasis& basis) {
  if (frames.rank() != 2 || frames.dim(1) != basis.bins()) {
    throw DimensionError("overlap_add: frames " + shape_str(frames.shape()) +
                         " do not match basis with " + std::to_string(basis.bins()) +
                         " bins");
  }
  auto y = transposed_conv1d(transpose(frames), basis.synthesis, basis.stride);
  return scale(reshape(y, {y.numel()}), 1.0 / basis.cola);
}

}  // namespace vqt
