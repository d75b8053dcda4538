// SPDX-License-Identifier: Apache-2.0
/**
 * @file   wav.hpp
 * @brief  RIFF/WAVE reading (PCM16, float32) and writing.
 */
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vqt {

/// Malformed or unsupported file. `offset()` is the byte where parsing failed.
class WavError : public std::runtime_error {
 public:
  WavError(const std::string& what, std::size_t offset);
  std::size_t offset() const { return offset_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string detail_;
  std::size_t offset_;
};

enum class WavFormat { kPcm16, kFloat32 };

struct WavAudio {
  double sample_rate = 0.0;
  std::size_t channels = 0;
  WavFormat format = WavFormat::kFloat32;
  std::vector<double> interleaved;

  std::size_t frames() const { return channels ? interleaved.size() / channels : 0; }
  /// Average of all channels.
  std::vector<double> mono() const;
};

WavAudio wav_decode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> wav_encode(std::span<const double> mono, double sample_rate,
                                     WavFormat format = WavFormat::kFloat32);

WavAudio wav_read_raw(const std::string& path);
/// Mono at `target_rate`, resampled with the windowed-sinc resampler when needed.
std::vector<double> wav_read(const std::string& path, double target_rate = 22050.0);
void wav_write(const std::string& path, std::span<const double> mono,
               double sample_rate = 22050.0, WavFormat format = WavFormat::kFloat32);

}  // namespace vqt
