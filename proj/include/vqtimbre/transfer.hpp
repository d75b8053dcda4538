// SPDX-License-Identifier: Apache-2.0
/**
 * @file   transfer.hpp
 * @brief  Timbre transfer, codebook-to-descriptor maps and descriptor-driven synthesis.
 */
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vqtimbre/descriptors.hpp"
#include "vqtimbre/model.hpp"

namespace vqt {

struct TransferResult {
  std::vector<double> output;
  std::vector<std::size_t> indices;  // empty for the baseline
  std::vector<double> gains;
};

/// encode -> quantize -> decode -> synthesize with the source's own gains.
/// Read-only on the model; noise drawn from mix_seed(seed, 0, 3).
TransferResult transfer(const TimbreModel& model, std::span<const double> source,
                        std::uint64_t seed = 0);

struct DescriptorMap {
  Descriptor descriptor = Descriptor::kCentroid;
  std::vector<double> values;  // one per code
  std::vector<bool> valid;
  std::size_t series_length = 16;
  std::size_t skip_frames = 2;
  double gain = 1.0;

  std::size_t size() const { return values.size(); }
  std::size_t valid_count() const;
  /// Nearest valid value, lowest index on ties. Throws when no entry is valid.
  std::size_t nearest(double target) const;

  /// code_index,descriptor,value,valid
  void write_csv(const std::string& path) const;
  static DescriptorMap read_csv(const std::string& path);
};

struct MapOptions {
  std::size_t series_length = 16;
  std::size_t skip_frames = 2;
  std::uint64_t seed = 0;
};

/// For each code k: decode a constant series of k, synthesize with unit gain,
/// average the descriptor over frames [skip, M). Entries with no defined frame
/// are marked invalid.
DescriptorMap map_codebook(const TimbreModel& model, Descriptor descriptor,
                           const MapOptions& options = {});

struct TargetSynthesis {
  std::vector<double> output;          // (M - 1) S + L samples
  std::vector<std::size_t> indices;    // one code per target
  std::vector<double> achieved;        // descriptor measured on the output, M frames
};

/// Nearest-value code per target, decoded as one sequence, unit gain.
TargetSynthesis synth_from_targets(const TimbreModel& model, const DescriptorMap& map,
                                   std::span<const double> targets, std::uint64_t seed = 0);

/// Descriptor frames aligned with the model's synthesis frames (L, S).
FrameParams model_frames(const TimbreModel& model);

/// Spearman rank correlation with average ranks for ties; NaN pairs dropped.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace vqt
