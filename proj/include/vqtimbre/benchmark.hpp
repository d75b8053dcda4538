// SPDX-License-Identifier: Apache-2.0
/**
 * @file   benchmark.hpp
 * @brief  End-to-end synthetic transfer benchmark: corpus, classifier, one VQ
 *         and one baseline model per class, evaluation of both.
 */
#pragma once

#include <functional>
#include <string>

#include "vqtimbre/classifier.hpp"
#include "vqtimbre/evaluate.hpp"
#include "vqtimbre/run_config.hpp"
#include "vqtimbre/synth_corpus.hpp"
#include "vqtimbre/trainer.hpp"

namespace vqt {

struct BenchmarkConfig {
  SynthCorpusConfig corpus{3, 40.0, 6, 0, 22050.0};
  ModelConfig model = ModelConfig::toy();
  TrainConfig train;
  ClassifierConfig classifier;
  std::uint64_t seed = 0;
  std::string out_dir;  // when set: checkpoints/, logs/, reports/ under it
};

struct BenchmarkResult {
  ClassifierReport classifier;
  EvalReport baseline;
  EvalReport vq;
  std::string table;
};

using ProgressFn = std::function<void(const std::string&)>;

BenchmarkResult run_benchmark(const BenchmarkConfig& config, const ProgressFn& progress = {});

}  // namespace vqt
