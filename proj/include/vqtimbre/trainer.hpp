// SPDX-License-Identifier: Apache-2.0
/**
 * @file   trainer.hpp
 * @brief  Corpus preparation, batch sampling and the optimisation loop.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vqtimbre/adam.hpp"
#include "vqtimbre/model.hpp"
#include "vqtimbre/run_config.hpp"

namespace vqt {

struct NamedAudio {
  std::string name;
  std::vector<double> samples;  // mono at the corpus rate
};

struct Corpus {
  double sample_rate = 22050.0;
  std::vector<double> train;
  std::vector<double> test;
  std::vector<std::string> train_sources;
  std::vector<std::string> test_sources;
  std::vector<std::string> skipped;  // unreadable or silent inputs
};

struct CorpusOptions {
  double split_frac = 0.15;
  double silence_db = -60.0;
  std::size_t silence_frame = 1024;
  std::uint64_t seed = 0;
  double sample_rate = 22050.0;
};

/// Drops every `frame`-sample block (the tail block included) whose RMS is
/// below `threshold_db` and concatenates the rest.
std::vector<double> trim_silence(const std::vector<double>& signal, std::size_t frame,
                                 double threshold_db);

/// Trims each input and splits: by whole files (seeded shuffle, greedy towards
/// split_frac of the total) when several survive, by the trailing time slice
/// when only one does. Throws std::runtime_error when nothing is left.
Corpus build_corpus(const std::vector<NamedAudio>& inputs, const CorpusOptions& options);
/// Reads WAV files (directories are scanned for *.wav, sorted). Unreadable
/// files are skipped with a warning on stderr and listed in Corpus::skipped.
Corpus build_corpus(const std::vector<std::string>& paths, const CorpusOptions& options);

/// `batch` segments from uniformly random offsets, shape [batch x segment].
Tensor sample_batch(const std::vector<double>& audio, std::size_t batch,
                    std::size_t segment, std::mt19937_64& rng);

struct LossRow {
  std::int64_t iter = 0;
  double total = 0, stft = 0, percep = 0, codebook = 0, commit = 0;
  std::size_t codes_used = 0;
};

std::string loss_csv_header();
std::string loss_csv_line(const LossRow& row);

/// Owns the optimiser and drives a model exclusively. Step s draws its batch
/// from mix_seed(seed, s, 1) and its noise from mix_seed(seed, s, 2), so a
/// resumed run replays exactly what an uninterrupted one would.
/// Overwrites the codebook rows with K distinct encoder frames drawn from
/// random segments of `audio`. Deterministic in `seed`.
void init_codebook_from_data(TimbreModel& model, const std::vector<double>& audio,
                             std::size_t segment, std::uint64_t seed);

class Trainer {
 public:
  Trainer(TimbreModel& model, const std::vector<double>& train_audio, const TrainConfig& config);
  /// Continue from a checkpoint's optimiser state.
  Trainer(TimbreModel& model, const std::vector<double>& train_audio, const TrainConfig& config,
          AdamState state);

  /// One optimiser update; throws NumericError (parameters untouched) on NaN.
  LossRow step();
  std::int64_t iteration() const { return adam_.step; }
  const AdamState& adam() const { return adam_; }
  const TrainConfig& config() const { return config_; }

  void save(const std::string& path, std::map<std::string, std::string> metadata = {}) const;

 private:
  TimbreModel& model_;
  const std::vector<double>& audio_;
  TrainConfig config_;
  AdamState adam_;
  std::size_t segment_;
};

struct TrainOutputs {
  std::string log_csv;         // appended to when resuming
  std::string checkpoint_dir;  // step_XXXXXXXX.vqtc, last.vqtc, emergency.vqtc
  std::map<std::string, std::string> metadata;  // echoed into every checkpoint
};

/// Runs until trainer.iteration() == config.iters. Rows go to the CSV (if set)
/// and to `on_row`. A NumericError writes emergency.vqtc and is rethrown.
std::vector<LossRow> train(Trainer& trainer, const TrainOutputs& outputs,
                           const std::function<void(const LossRow&)>& on_row = {});

}  // namespace vqt
