// SPDX-License-Identifier: Apache-2.0
/**
 * @file   descriptors.hpp
 * @brief  Frame-wise acoustic descriptors: f0, loudness, centroid, bandwidth.
 *
 * All curves use non-centred frames: frame t covers [t*hop, t*hop + frame).
 */
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vqt {

struct FrameParams {
  std::size_t frame = 2048;
  std::size_t hop = 512;
  double sample_rate = 22050.0;
};

struct F0Track {
  std::vector<double> hz;     // 0 on unvoiced frames
  std::vector<bool> voiced;
  std::size_t voiced_count() const;
  /// Only the voiced values, in order.
  std::vector<double> voiced_values() const;
};

/// YIN: cumulative-mean-normalized difference, absolute threshold, parabolic
/// refinement. Frames below -60 dB RMS or without a dip under the threshold
/// are unvoiced.
F0Track f0_track(std::span<const double> signal, const FrameParams& params = {},
                 double threshold = 0.1);

/// Per-frame RMS in dB re full scale, floored at -90 dB.
std::vector<double> loudness_curve(std::span<const double> signal,
                                   const FrameParams& params = {});

/// Magnitude-weighted mean frequency of Hann-windowed frames (Hz). A frame
/// with no energy has centroid 0.
std::vector<double> spectral_centroid(std::span<const double> signal,
                                      const FrameParams& params = {});

/// Magnitude-weighted standard deviation around the centroid (Hz); 0 for
/// silent frames.
std::vector<double> spectral_bandwidth(std::span<const double> signal,
                                       const FrameParams& params = {});

enum class Descriptor { kCentroid, kBandwidth, kF0, kLoudness };

std::string_view descriptor_name(Descriptor d);
std::optional<Descriptor> parse_descriptor(std::string_view name);

/// Curve for `d`; unvoiced f0 frames come back as NaN.
std::vector<double> descriptor_curve(Descriptor d, std::span<const double> signal,
                                     const FrameParams& params = {});

/// Writes "frame_index,time_s,value" rows; time is the frame start.
void write_curve_csv(const std::string& path, std::span<const double> values,
                     const FrameParams& params);

}  // namespace vqt
