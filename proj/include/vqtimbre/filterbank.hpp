// SPDX-License-Identifier: Apache-2.0
/**
 * @file   filterbank.hpp
 * @brief  Fourier-basis analysis/synthesis kernels used as strided convolutions.
 *
 * Frames are laid out as [T x N] with N = L + 2: the first N/2 columns hold
 * the real parts of bins 0..L/2, the last N/2 the imaginary parts.
 */
#pragma once

#include <cstddef>
#include <vector>

#include "vqtimbre/tensor.hpp"

namespace vqt {

/// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

/// Overlap-add gain of `window` at hop `stride`, measured by summing shifted
/// copies over one hop period. Returns the mean; `max_deviation` (optional)
/// receives the largest departure from it.
double cola_constant(const std::vector<double>& window, std::size_t stride,
                     double* max_deviation = nullptr);

struct FilterbankBasis {
  std::size_t window = 0;  // L
  std::size_t stride = 0;  // S
  std::vector<double> hann;
  Tensor analysis;   // F: [N x 1 x L], Hann-windowed forward DFT rows
  Tensor synthesis;  // I: [N x 1 x L], inverse real DFT rows
  double cola = 1.0;

  std::size_t bins() const { return window + 2; }
  std::size_t half_bins() const { return window / 2 + 1; }
  /// Frames produced from `samples` samples (0 when shorter than a window).
  std::size_t frame_count(std::size_t samples) const;
  /// Samples produced by overlap-adding `frames` frames.
  std::size_t output_length(std::size_t frames) const;

  /// L must be even and >= 2, S in [1, L].
  static FilterbankBasis make(std::size_t window, std::size_t stride);
};

struct ComplexFrames {
  Tensor values;  // [T x N]
  std::size_t hop = 0;
  std::size_t frames() const { return values.dim(0); }
};

/// frame t = signal[tS : tS + L] * hann(L), shape [T x L].
Tensor hann_slice(const Tensor& signal, std::size_t window, std::size_t stride);

/// Windowed DFT of every frame via the analysis convolution.
ComplexFrames fourier_frames(const Tensor& signal, const FilterbankBasis& basis);

/// Inverse basis per frame, overlap-added at the basis stride and divided by
/// the measured COLA constant. Output length (T - 1) S + L.
Tensor overlap_add(const Tensor& frames, const FilterbankBasis& basis);
inline Tensor overlap_add(const ComplexFrames& frames, const FilterbankBasis& basis) {
  return overlap_add(frames.values, basis);
}

}  // namespace vqt
