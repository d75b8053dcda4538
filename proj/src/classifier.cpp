// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <stdexcept>

#include "vqtimbre/adam.hpp"
#include "vqtimbre/ops.hpp"
#include "vqtimbre/resample.hpp"
#include "vqtimbre/spectral.hpp"

namespace vqt {

namespace {

struct Example {
  std::vector<double> features;
  int label;
};

std::uint64_t fnv1a(std::uint64_t h, std::span<const double> v) {
  for (double d : v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &d, sizeof(double));
    for (auto b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace

std::vector<double> pitch_shift(std::span<const double> signal, double semitones,
                                double sample_rate) {
  if (semitones == 0.0) return {signal.begin(), signal.end()};
  return resample(signal, sample_rate, sample_rate * std::pow(2.0, -semitones / 12.0));
}

FrameClassifier::FrameClassifier(const ClassifierConfig& config, std::size_t classes)
    : config_(config), classes_(classes) {
  if (classes < 2) throw std::invalid_argument("classifier: need at least two classes");
  if (config.channels.empty()) throw std::invalid_argument("classifier: need at least one conv layer");
  std::mt19937_64 rng(mix_seed(config.seed, 0x636c6173));
  std::size_t c_in = 2;
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    const auto c_out = config.channels[i];
    const double b = fan_in_bound(c_in * config.kernel);
    params_.add("conv" + std::to_string(i) + ".weight", uniform_tensor({c_out, c_in, config.kernel}, b, rng));
    params_.add("conv" + std::to_string(i) + ".bias", uniform_tensor({c_out}, b, rng));
    c_in = c_out;
  }
  const double b = fan_in_bound(c_in);
  params_.add("head.weight", uniform_tensor({classes, c_in}, b, rng));
  params_.add("head.bias", uniform_tensor({classes}, b, rng));
}

std::vector<double> FrameClassifier::features(std::span<const double> frame) const {
  const std::size_t n = config_.frame;
  if (frame.size() != n) throw DimensionError("classifier: frame of " + std::to_string(frame.size()) +
                                              " samples, expected " + std::to_string(n));
  auto mag = stft_magnitude(frame, n, n);
  const std::size_t bins = mag.size();
  std::vector<double> out(2 * bins);
  double mean = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    out[k] = std::log(mag[k] + 1e-6);
    mean += out[k];
  }
  mean /= static_cast<double>(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    out[k] -= mean;
    out[bins + k] = 2.0 * static_cast<double>(k) / static_cast<double>(bins - 1) - 1.0;
  }
  return out;
}

std::vector<std::size_t> FrameClassifier::frame_offsets(std::span<const double> signal) const {
  std::vector<std::size_t> out;
  const double thresh = std::pow(10.0, config_.silence_db / 20.0);
  for (std::size_t s = 0; s + config_.frame <= signal.size(); s += config_.frame) {
    double acc = 0.0;
    for (std::size_t i = s; i < s + config_.frame; ++i) acc += signal[i] * signal[i];
    if (std::sqrt(acc / static_cast<double>(config_.frame)) >= thresh) out.push_back(s);
  }
  return out;
}

Tensor FrameClassifier::logits(const Tensor& batch) const {
  Tensor h = batch;
  for (std::size_t i = 0; i < config_.channels.size(); ++i) {
    const auto p = "conv" + std::to_string(i);
    h = relu(conv1d(h, params_.get(p + ".weight"), params_.get(p + ".bias"), 2, config_.kernel / 2));
  }
  return linear(mean_last_axis(h), params_.get("head.weight"), params_.get("head.bias"));
}

std::vector<std::vector<double>> FrameClassifier::probabilities(std::span<const double> signal) const {
  const auto offsets = frame_offsets(signal);
  std::vector<std::vector<double>> out;
  const std::size_t bins = config_.frame / 2 + 1;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < offsets.size(); start += kChunk) {
    const std::size_t count = std::min(kChunk, offsets.size() - start);
    std::vector<double> stacked;
    stacked.reserve(count * 2 * bins);
    for (std::size_t i = 0; i < count; ++i) {
      auto f = features(signal.subspan(offsets[start + i], config_.frame));
      stacked.insert(stacked.end(), f.begin(), f.end());
    }
    auto p = softmax_rows(logits(Tensor::from({count, 2, bins}, std::move(stacked))));
    for (std::size_t i = 0; i < count; ++i)
      out.emplace_back(p.begin() + static_cast<std::ptrdiff_t>(i * classes_),
                       p.begin() + static_cast<std::ptrdiff_t>((i + 1) * classes_));
  }
  return out;
}

std::vector<std::size_t> FrameClassifier::predict(std::span<const double> signal) const {
  std::vector<std::size_t> out;
  for (const auto& row : probabilities(signal)) {
    out.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return out;
}

FrameClassifier train_classifier(const std::vector<LabeledAudio>& corpus,
                                 const ClassifierConfig& config, ClassifierReport* report) {
  std::map<std::size_t, std::vector<double>> by_class;
  for (const auto& a : corpus) {
    auto& dst = by_class[a.label];
    dst.insert(dst.end(), a.samples.begin(), a.samples.end());
  }
  if (by_class.size() < 2) throw std::invalid_argument("train_classifier: need at least two classes");
  const std::size_t classes = by_class.rbegin()->first + 1;
  FrameClassifier clf(config, classes);

  std::vector<Example> train, held;
  std::uint64_t checksum = 1469598103934665603ULL;
  for (const auto& [label, audio] : by_class) {
    const auto cut = audio.size() - static_cast<std::size_t>(config.holdout_frac * static_cast<double>(audio.size()));
    std::span<const double> train_part(audio.data(), cut);
    std::span<const double> held_part(audio.data() + cut, audio.size() - cut);
    std::vector<std::vector<double>> variants;
    variants.emplace_back(train_part.begin(), train_part.end());
    for (double s : config.augment_semitones) variants.push_back(pitch_shift(train_part, s, config.sample_rate));
    for (const auto& v : variants) {
      for (auto off : clf.frame_offsets(v)) {
        Example e{clf.features(std::span<const double>(v).subspan(off, config.frame)), static_cast<int>(label)};
        checksum = fnv1a(checksum, e.features);
        train.push_back(std::move(e));
      }
    }
    for (auto off : clf.frame_offsets(held_part)) {
      held.push_back({clf.features(held_part.subspan(off, config.frame)), static_cast<int>(label)});
    }
  }
  if (train.empty()) throw std::runtime_error("train_classifier: no non-silent training frames");

  AdamState adam;
  adam.config.lr = config.lr;
  adam.init(clf.params());
  const std::size_t bins = config.frame / 2 + 1;
  std::mt19937_64 rng(mix_seed(config.seed, 0x6570));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t count = std::min(config.batch, order.size() - start);
      std::vector<double> stacked;
      stacked.reserve(count * 2 * bins);
      std::vector<int> labels;
      for (std::size_t i = 0; i < count; ++i) {
        const auto& e = train[order[start + i]];
        stacked.insert(stacked.end(), e.features.begin(), e.features.end());
        labels.push_back(e.label);
      }
      auto loss = softmax_cross_entropy(clf.logits(Tensor::from({count, 2, bins}, std::move(stacked))), labels);
      clf.params().zero_grad();
      backward(loss);
      adam_step(clf.params(), adam);
    }
  }

  if (report) {
    report->train_frames = train.size();
    report->heldout_frames = held.size();
    report->train_checksum = checksum;
    std::size_t correct = 0;
    std::vector<std::size_t> predicted;
    for (const auto& e : held) {
      auto p = softmax_rows(clf.logits(Tensor::from({1, 2, bins}, e.features)));
      const auto arg = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
      predicted.push_back(arg);
      if (static_cast<int>(arg) == e.label) ++correct;
    }
    report->heldout_accuracy = held.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(held.size());
    report->degenerate = !predicted.empty() &&
                         std::all_of(predicted.begin(), predicted.end(), [&](auto p) { return p == predicted[0]; });
  }
  return clf;
}

}  // namespace vqt
