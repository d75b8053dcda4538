// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "vqtimbre/wav.hpp"

namespace vqt {

namespace fs = std::filesystem;

std::vector<double> trim_silence(const std::vector<double>& signal, std::size_t frame,
                                 double threshold_db) {
  std::vector<double> out;
  out.reserve(signal.size());
  const double thresh = std::pow(10.0, threshold_db / 20.0);
  for (std::size_t start = 0; start < signal.size(); start += frame) {
    const std::size_t end = std::min(signal.size(), start + frame);
    double acc = 0.0;
    for (std::size_t i = start; i < end; ++i) acc += signal[i] * signal[i];
    const double rms = std::sqrt(acc / static_cast<double>(end - start));
    if (rms >= thresh) out.insert(out.end(), signal.begin() + start, signal.begin() + end);
  }
  return out;
}

Corpus build_corpus(const std::vector<NamedAudio>& inputs, const CorpusOptions& options) {
  Corpus c;
  c.sample_rate = options.sample_rate;
  std::vector<NamedAudio> kept;
  for (const auto& in : inputs) {
    auto trimmed = trim_silence(in.samples, options.silence_frame, options.silence_db);
    if (trimmed.empty()) {
      c.skipped.push_back(in.name);
      continue;
    }
    kept.push_back({in.name, std::move(trimmed)});
  }
  if (kept.empty()) throw std::runtime_error("corpus: no audio left after silence trimming");

  if (kept.size() == 1) {
    const auto& s = kept[0].samples;
    const auto n_test = static_cast<std::size_t>(std::floor(options.split_frac * static_cast<double>(s.size())));
    c.train.assign(s.begin(), s.end() - static_cast<std::ptrdiff_t>(n_test));
    c.test.assign(s.end() - static_cast<std::ptrdiff_t>(n_test), s.end());
    c.train_sources.push_back(kept[0].name);
    if (n_test) c.test_sources.push_back(kept[0].name);
    return c;
  }

  std::size_t total = 0;
  for (const auto& k : kept) total += k.samples.size();
  const double target = options.split_frac * static_cast<double>(total);
  std::vector<std::size_t> order(kept.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(options.seed, 0x73706c6974));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

  std::vector<bool> is_test(kept.size(), false);
  double test_len = 0.0;
  std::size_t n_test = 0;
  for (auto idx : order) {
    if (options.split_frac <= 0 || n_test + 1 == kept.size()) break;
    const double len = static_cast<double>(kept[idx].samples.size());
    if (std::abs(test_len + len - target) < std::abs(test_len - target) || n_test == 0) {
      is_test[idx] = true;
      test_len += len;
      ++n_test;
    }
    if (test_len >= target) break;
  }
  for (std::size_t i = 0; i < kept.size(); ++i) {
    auto& dst = is_test[i] ? c.test : c.train;
    dst.insert(dst.end(), kept[i].samples.begin(), kept[i].samples.end());
    (is_test[i] ? c.test_sources : c.train_sources).push_back(kept[i].name);
  }
  return c;
}

Corpus build_corpus(const std::vector<std::string>& paths, const CorpusOptions& options) {
  std::vector<std::string> files;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<std::string> found;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (e.is_regular_file() && ext == ".wav") found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(p);
    }
  }
  std::vector<NamedAudio> inputs;
  std::vector<std::string> unreadable;
  for (const auto& f : files) {
    try {
      inputs.push_back({f, wav_read(f, options.sample_rate)});
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << f << ": " << e.what() << "\n";
      unreadable.push_back(f);
    }
  }
  if (inputs.empty()) throw std::runtime_error("corpus: no readable audio files");
  auto c = build_corpus(inputs, options);
  c.skipped.insert(c.skipped.begin(), unreadable.begin(), unreadable.end());
  return c;
}

Tensor sample_batch(const std::vector<double>& audio, std::size_t batch, std::size_t segment,
                    std::mt19937_64& rng) {
  if (audio.size() < segment) {
    throw std::runtime_error("sample_batch: corpus has " + std::to_string(audio.size()) +
                             " samples, segment needs " + std::to_string(segment));
  }
  const std::uint64_t offsets = audio.size() - segment + 1;
  std::vector<double> out(batch * segment);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto off = uniform_index(rng, offsets);
    std::copy_n(audio.begin() + static_cast<std::ptrdiff_t>(off), segment,
                out.begin() + static_cast<std::ptrdiff_t>(b * segment));
  }
  return Tensor::from({batch, segment}, std::move(out));
}

std::string loss_csv_header() { return "iter,total,stft,percep,codebook,commit,codes_used"; }

std::string loss_csv_line(const LossRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%zu",
                static_cast<long long>(r.iter), r.total, r.stft, r.percep, r.codebook, r.commit,
                r.codes_used);
  return buf;
}

Trainer::Trainer(TimbreModel& model, const std::vector<double>& train_audio,
                 const TrainConfig& config)
    : model_(model), audio_(train_audio), config_(config) {
  adam_.config.lr = config.lr;
  adam_.init(model.params());
  segment_ = config.segment_samples(model.config().sample_rate);
  config_.validate(model.config().window, model.config().sample_rate);
}

Trainer::Trainer(TimbreModel& model, const std::vector<double>& train_audio,
                 const TrainConfig& config, AdamState state)
    : Trainer(model, train_audio, config) {
  adam_ = std::move(state);
}

void init_codebook_from_data(TimbreModel& model, const std::vector<double>& audio,
                             std::size_t segment, std::uint64_t seed) {
  auto& cb = model.codebook();
  const std::size_t k = cb.size(), d = cb.dim();
  std::mt19937_64 rng(mix_seed(seed, 0, 6));
  std::vector<double> frames;
  // enough segments for K frames, capped in case the encoder sees few windows
  for (int tries = 0; frames.size() < k * d && tries < 64; ++tries) {
    auto seg = sample_batch(audio, 1, segment, rng);
    auto z = model.encode(reshape(seg, {segment})).z.data();
    frames.insert(frames.end(), z.begin(), z.end());
  }
  const std::size_t n = frames.size() / d;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto emb = cb.embeddings().mutable_data();
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t pick;
    if (i < n) {
      std::swap(order[i], order[i + uniform_index(rng, n - i)]);
      pick = order[i];
    } else {
      pick = uniform_index(rng, n);
    }
    std::copy_n(frames.begin() + static_cast<std::ptrdiff_t>(pick * d), d,
                emb.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
}

LossRow Trainer::step() {
  const auto s = static_cast<std::uint64_t>(adam_.step);
  if (s == 0 && model_.quantized() && model_.config().codebook_init == "data") {
    init_codebook_from_data(model_, audio_, segment_, config_.seed);
  }
  std::mt19937_64 batch_rng(mix_seed(config_.seed, s, 1));
  std::mt19937_64 noise_rng(mix_seed(config_.seed, s, 2));
  auto batch = sample_batch(audio_, config_.batch, segment_, batch_rng);

  LossRow row;
  row.iter = adam_.step + 1;
  std::set<std::size_t> used;
  Tensor total;
  const double inv_b = 1.0 / static_cast<double>(config_.batch);
  for (std::size_t b = 0; b < config_.batch; ++b) {
    auto w = vqt::row(batch, b);
    auto fwd = model_.forward(w, noise_rng, true);
    auto loss = model_.objective(w, fwd);
    used.insert(fwd.indices.begin(), fwd.indices.end());
    row.stft += loss.stft * inv_b;
    row.percep += loss.percep * inv_b;
    row.codebook += loss.codebook * inv_b;
    row.commit += loss.commit * inv_b;
    auto part = scale(loss.total, inv_b);
    total = total.defined() ? add(total, part) : part;
  }
  row.total = total.item();
  row.codes_used = used.size();
  model_.params().zero_grad();
  backward(total);
  adam_step(model_.params(), adam_);
  return row;
}

void Trainer::save(const std::string& path, std::map<std::string, std::string> metadata) const {
  CheckpointExtras extras;
  extras.seed = config_.seed;
  extras.step = adam_.step;
  extras.adam = &adam_;
  extras.metadata = std::move(metadata);
  save_checkpoint(path, model_, extras);
}

std::vector<LossRow> train(Trainer& trainer, const TrainOutputs& outputs,
                           const std::function<void(const LossRow&)>& on_row) {
  std::ofstream log;
  if (!outputs.log_csv.empty()) {
    const bool fresh = trainer.iteration() == 0 || !fs::exists(outputs.log_csv);
    log.open(outputs.log_csv, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("train: cannot write " + outputs.log_csv);
    if (fresh) log << loss_csv_header() << "\n";
  }
  auto ckpt = [&](const std::string& name) {
    return (fs::path(outputs.checkpoint_dir) / name).string();
  };
  if (!outputs.checkpoint_dir.empty()) fs::create_directories(outputs.checkpoint_dir);

  std::vector<LossRow> rows;
  const auto& cfg = trainer.config();
  while (trainer.iteration() < cfg.iters) {
    LossRow row;
    try {
      row = trainer.step();
    } catch (const NumericError&) {
      if (!outputs.checkpoint_dir.empty()) trainer.save(ckpt("emergency.vqtc"), outputs.metadata);
      throw;
    }
    rows.push_back(row);
    if (log.is_open()) log << loss_csv_line(row) << "\n";
    if (on_row) on_row(row);
    if (!outputs.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
        trainer.iteration() % cfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "step_%08lld.vqtc", static_cast<long long>(trainer.iteration()));
      trainer.save(ckpt(name), outputs.metadata);
    }
  }
  if (!outputs.checkpoint_dir.empty()) trainer.save(ckpt("last.vqtc"), outputs.metadata);
  return rows;
}

}  // namespace vqt
