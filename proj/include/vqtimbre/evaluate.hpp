// SPDX-License-Identifier: Apache-2.0
/**
 * @file   evaluate.hpp
 * @brief  Transfer scoring: target-class accuracy, DTW on f0 and loudness, LSD.
 */
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vqtimbre/classifier.hpp"
#include "vqtimbre/descriptors.hpp"
#include "vqtimbre/model.hpp"

namespace vqt {

/// Anything that maps a source waveform to a transferred waveform.
using TransferFn = std::function<std::vector<double>(std::span<const double>)>;

TransferFn model_transfer_fn(const TimbreModel& model, std::uint64_t seed = 0);

struct EvalRow {
  std::string domain;
  double accuracy = 0.0;      // fraction of scored output frames labelled as the target
  double dtw_f0 = 0.0;        // mean over sources with voiced frames on both sides
  double dtw_loudness = 0.0;
  double lsd = 0.0;           // target-domain test reconstructions
  std::size_t frames = 0;     // classifier frames scored
};

struct EvalReport {
  std::string model;
  std::vector<EvalRow> rows;

  /// Unweighted mean of the rows, domain "average".
  EvalRow average() const;
  /// domain,accuracy,dtw_f0,dtw_loudness,lsd,frames (round-trip exact).
  std::string to_csv() const;
  static EvalReport from_csv(const std::string& text);
  void write_csv(const std::string& path) const;
  static EvalReport read_csv(const std::string& path);
};

struct DomainData {
  std::string name;
  std::size_t target_class = 0;
  std::vector<std::vector<double>> sources;      // other-domain excerpts to transfer
  std::vector<std::vector<double>> target_test;  // held-out target excerpts
};

EvalRow evaluate_domain(const TransferFn& fn, const DomainData& domain,
                        const FrameClassifier& classifier, const FrameParams& frames = {});

/// Side-by-side text table, one row per domain plus the average.
std::string format_table(const EvalReport& baseline, const EvalReport& vq);

}  // namespace vqt
