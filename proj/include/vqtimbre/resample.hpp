// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace vqt {

struct ResampleQuality {
  int zero_crossings = 32;    // kernel half-width in input-rate sinc lobes
  double kaiser_beta = 8.6;   // roughly 90 dB stopband
  double rolloff = 0.95;      // cutoff as a fraction of the lower Nyquist
};

/// Band-limited resampling with a Kaiser-windowed sinc kernel. Output length is
/// round(len * to_rate / from_rate). Equal rates return the input unchanged.
std::vector<double> resample(std::span<const double> input, double from_rate,
                             double to_rate, const ResampleQuality& quality = {});

}  // namespace vqt
