// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/benchmark.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>


namespace vqt {

namespace fs = std::filesystem;

BenchmarkResult run_benchmark(const BenchmarkConfig& config, const ProgressFn& progress) {
  auto say = [&](const std::string& m) {
    if (progress) progress(m);
  };
  BenchmarkResult result;
  auto corpus = synth_corpus(config.corpus);
  const std::size_t classes = config.corpus.classes;

  std::string ckpt_dir, log_dir, rep_dir;
  if (!config.out_dir.empty()) {
    ckpt_dir = (fs::path(config.out_dir) / "checkpoints").string();
    log_dir = (fs::path(config.out_dir) / "logs").string();
    rep_dir = (fs::path(config.out_dir) / "reports").string();
    for (const auto& d : {ckpt_dir, log_dir, rep_dir}) fs::create_directories(d);
  }

  say("training classifier");
  auto clf_cfg = config.classifier;
  clf_cfg.sample_rate = config.model.sample_rate;
  auto clf = train_classifier(corpus, clf_cfg, &result.classifier);
  say("classifier held-out accuracy " + std::to_string(result.classifier.heldout_accuracy));

  std::vector<Corpus> splits;
  std::map<std::string, const LabeledAudio*> by_name;
  for (const auto& a : corpus) by_name[a.name] = &a;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<NamedAudio> files;
    for (const auto& a : corpus)
      if (a.label == c) files.push_back({a.name, a.samples});
    CorpusOptions opt;
    opt.split_frac = config.train.split_frac;
    opt.silence_db = config.train.silence_db;
    opt.silence_frame = config.train.silence_frame;
    opt.seed = mix_seed(config.seed, c);
    opt.sample_rate = config.model.sample_rate;
    splits.push_back(build_corpus(files, opt));
  }

  result.baseline.model = "baseline";
  result.vq.model = "vq";
  for (std::size_t c = 0; c < classes; ++c) {
    DomainData domain;
    domain.name = synth_class_name(c);
    domain.target_class = c;
    for (std::size_t o = 0; o < classes; ++o) {
      if (o == c) continue;
      for (const auto& name : splits[o].test_sources) domain.sources.push_back(by_name.at(name)->samples);
    }
    for (const auto& name : splits[c].test_sources) domain.target_test.push_back(by_name.at(name)->samples);

    for (bool quantized : {false, true}) {
      auto mcfg = config.model;
      mcfg.quantized = quantized;
      const std::string tag = domain.name + (quantized ? "_vq" : "_baseline");
      TimbreModel model(mcfg, mix_seed(config.seed, c, quantized ? 2 : 1));
      auto tcfg = config.train;
      tcfg.seed = mix_seed(config.seed, c, quantized ? 4 : 3);
      Trainer trainer(model, splits[c].train, tcfg);
      TrainOutputs outputs;
      if (!config.out_dir.empty()) {
        outputs.log_csv = (fs::path(log_dir) / (tag + ".csv")).string();
        outputs.checkpoint_dir = (fs::path(ckpt_dir) / tag).string();
      }
      outputs.metadata["domain"] = domain.name;
      say("training " + tag);
      auto rows = train(trainer, outputs);
      if (!rows.empty()) say(tag + ": final stft loss " + std::to_string(rows.back().stft));
      auto row = evaluate_domain(model_transfer_fn(model, config.seed), domain, clf,
                                 FrameParams{2048, 512, mcfg.sample_rate});
      (quantized ? result.vq : result.baseline).rows.push_back(row);
    }
  }
  result.table = format_table(result.baseline, result.vq);
  if (!config.out_dir.empty()) {
    result.baseline.write_csv((fs::path(rep_dir) / "eval_baseline.csv").string());
    result.vq.write_csv((fs::path(rep_dir) / "eval_vq.csv").string());
    std::ofstream((fs::path(rep_dir) / "table.txt").string()) << result.table;
  }
  return result;
}

}  // namespace vqt
