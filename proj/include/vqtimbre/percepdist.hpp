// SPDX-License-Identifier: Apache-2.0
/**
 * @file   percepdist.hpp
 * @brief  Deep feature distance: channel-weighted L1 between conv activations.
 *
 *   d(x, y) = sum_l 1/T_l * || w_l (.) (F_l(x) - F_l(y)) ||_1
 *
 * Weights are loaded from a container file or drawn at random; training them
 * on listener ratings is not part of this library.
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vqtimbre/params.hpp"

namespace vqt {

struct PercepConfig {
  std::size_t layers = 8;
  std::size_t kernel = 15;
  std::size_t stride = 2;
  std::size_t base_channels = 32;  // doubles each layer up to max_channels
  std::size_t max_channels = 256;

  std::size_t channels(std::size_t layer) const;
};

class PercepNet {
 public:
  static PercepNet random_init(const PercepConfig& config, std::uint64_t seed);
  /// Loads weights and re-checks the stored probe distances (1e-6 tolerance).
  static PercepNet load_weights(const std::string& path);
  void save_weights(const std::string& path) const;

  const PercepConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Activations of every layer for a 1-D signal; each is [C_l x T_l].
  std::vector<Tensor> features(const Tensor& signal) const;
  /// Differentiable w.r.t. either argument; lengths must match.
  Tensor distance(const Tensor& x, const Tensor& y) const;
  double distance_value(const std::vector<double>& x, const std::vector<double>& y) const;

  /// Distances on the built-in probe pairs, stored alongside saved weights.
  std::vector<double> probe_distances() const;

 private:
  PercepConfig config_;
  ParameterSet params_;
};

/// Deterministic probe signal pairs (clean, altered) used for weight checks.
std::vector<std::pair<std::vector<double>, std::vector<double>>> percep_probe_pairs();

}  // namespace vqt
