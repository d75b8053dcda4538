// SPDX-License-Identifier: Apache-2.0
/**
 * @file   synth_corpus.hpp
 * @brief  Seeded synthetic instrument classes standing in for licensed datasets.
 *
 * Recipes (class index modulo 3, higher indices shift the resonances up):
 *   0 "mellow_saw"      band-limited sawtooth through a 2-pole low-pass at ~700 Hz
 *   1 "nasal_square"    band-limited square plus a resonant band-pass near 2.5 kHz
 *   2 "breathy_formant" pulse train with light noise through formants at 3.5/5.5/7.5 kHz
 * Every file is a phrase of notes with random pitch (110-330 Hz), vibrato,
 * occasional glides, per-note loudness and short gaps; peak-normalised to 0.9.
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vqt {

struct SynthCorpusConfig {
  std::size_t classes = 3;
  double seconds_per_class = 40.0;
  std::size_t files_per_class = 4;
  std::uint64_t seed = 0;
  double sample_rate = 22050.0;
};

struct LabeledAudio {
  std::string name;        // e.g. "mellow_saw_02"
  std::size_t label = 0;
  std::string class_name;
  std::vector<double> samples;
};

std::string synth_class_name(std::size_t label);

/// files_per_class files per class, class-major order.
std::vector<LabeledAudio> synth_corpus(const SynthCorpusConfig& config);

/// One phrase of `seconds` for class `label`, deterministic in (label, seed).
std::vector<double> synth_phrase(std::size_t label, double seconds, std::uint64_t seed,
                                 double sample_rate = 22050.0);

}  // namespace vqt
