// SPDX-License-Identifier: Apache-2.0
/**
 * @file   classifier.hpp
 * @brief  Frame-level timbre classifier used to score transfers.
 *
 * Input: non-overlapping 4096-sample frames, Hann-windowed, as a log-magnitude
 * spectrum (2049 bins) with its mean removed, stacked with a channel holding
 * the normalised bin position. Four stride-2 convolutions with ReLU, global
 * average pooling and a linear softmax layer.
 */
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vqtimbre/params.hpp"
#include "vqtimbre/synth_corpus.hpp"

namespace vqt {

struct ClassifierConfig {
  std::size_t frame = 4096;
  std::vector<std::size_t> channels{8, 16, 16, 32};
  std::size_t kernel = 9;
  std::size_t epochs = 8;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::vector<double> augment_semitones{-2, -1, 1, 2};  // empty disables augmentation
  double holdout_frac = 0.15;
  double silence_db = -60.0;  // quieter frames are neither trained on nor scored
  std::uint64_t seed = 0;
  double sample_rate = 22050.0;
};

struct ClassifierReport {
  double heldout_accuracy = 0.0;
  std::size_t train_frames = 0;
  std::size_t heldout_frames = 0;
  bool degenerate = false;             // every held-out frame got the same label
  std::uint64_t train_checksum = 0;    // FNV-1a over the training features
};

class FrameClassifier {
 public:
  FrameClassifier(const ClassifierConfig& config, std::size_t classes);

  const ClassifierConfig& config() const { return config_; }
  std::size_t classes() const { return classes_; }
  ParameterSet& params() { return params_; }

  /// [2 x (frame/2 + 1)] feature map of one frame, row-major.
  std::vector<double> features(std::span<const double> frame) const;
  /// Start offsets of the scored frames of `signal` (non-silent, non-overlapping).
  std::vector<std::size_t> frame_offsets(std::span<const double> signal) const;

  /// Logits [B x classes] for feature maps stacked as [B x 2 x bins].
  Tensor logits(const Tensor& batch) const;
  /// Softmax rows per scored frame.
  std::vector<std::vector<double>> probabilities(std::span<const double> signal) const;
  std::vector<std::size_t> predict(std::span<const double> signal) const;

 private:
  ClassifierConfig config_;
  std::size_t classes_;
  ParameterSet params_;
};

/// Trains on the first (1 - holdout_frac) of each class's concatenated audio,
/// with pitch-shift augmentation by resampling, and scores the rest.
/// Throws std::invalid_argument with fewer than two classes.
FrameClassifier train_classifier(const std::vector<LabeledAudio>& corpus,
                                 const ClassifierConfig& config,
                                 ClassifierReport* report = nullptr);

/// Pitch shift by resampling (duration changes by the same factor).
std::vector<double> pitch_shift(std::span<const double> signal, double semitones,
                                double sample_rate = 22050.0);

}  // namespace vqt
