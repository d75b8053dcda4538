// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vqtimbre/tensor.hpp"

namespace vqt {

/// Hann-windowed magnitude spectrogram, no centering: [T x (n_fft/2 + 1)],
/// T = (len - n_fft) / hop + 1. Differentiable w.r.t. the signal.
Tensor stft_magnitude(const Tensor& signal, std::size_t n_fft, std::size_t hop);

/// Plain-vector variant, row-major [T x (n_fft/2 + 1)].
std::vector<double> stft_magnitude(std::span<const double> signal,
                                   std::size_t n_fft, std::size_t hop,
                                   std::size_t* frames = nullptr);

struct MultiScaleStftConfig {
  std::vector<std::size_t> windows{128, 256, 512, 1024, 2048};
  double hop_ratio = 0.25;
};

/// Sum over resolutions of the mean absolute magnitude difference. Scales
/// whose window exceeds the signal are skipped; at least one must remain.
Tensor multiscale_stft_loss(const Tensor& target, const Tensor& estimate,
                            const MultiScaleStftConfig& config = {});

struct LsdConfig {
  std::size_t window = 2048;
  std::size_t hop = 512;
  double floor = 1e-7;
};

/// Mean over frames of the L2 norm of log10-magnitude differences.
double lsd(std::span<const double> a, std::span<const double> b,
           const LsdConfig& config = {});

}  // namespace vqt
