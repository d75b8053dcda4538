// SPDX-License-Identifier: Apache-2.0
/**
 * @file   run_config.hpp
 * @brief  Flat key=value run configuration shared by the trainer and the CLI.
 *
 * One `key = value` per line, `#` starts a comment. Keys are the ModelConfig
 * names (window, latent_dim, ...), the TrainConfig names below and a few paths.
 * Unknown keys are rejected with the line number.
 */
#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "vqtimbre/model.hpp"

namespace vqt {

struct TrainConfig {
  double segment_seconds = 1.5;
  std::size_t batch = 20;
  std::int64_t iters = 150000;
  double lr = 2e-4;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 1000;  // 0 disables periodic checkpoints
  double silence_db = -60.0;
  std::size_t silence_frame = 1024;
  double split_frac = 0.15;

  std::size_t segment_samples(double sample_rate) const;
  void validate(std::size_t window, double sample_rate) const;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string data;            // comma-separated WAV files or directories
  std::string percep_weights;  // optional container with PercepNet weights

  /// Throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Every key with its current value, for provenance echo.
  std::map<std::string, std::string> entries() const;

  static RunConfig parse(const std::string& text, const std::string& origin = "<string>");
  static RunConfig load(const std::string& path);
};

}  // namespace vqt
