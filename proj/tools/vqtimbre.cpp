// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Output layout under --out:
//   checkpoints/  audio/  logs/  reports/
// Exit codes: 0 ok, 1 usage, 2 data, 3 numeric failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "vqtimbre/benchmark.hpp"
#include "vqtimbre/container.hpp"
#include "vqtimbre/descriptors.hpp"
#include "vqtimbre/run_config.hpp"
#include "vqtimbre/spectral.hpp"
#include "vqtimbre/synth_corpus.hpp"
#include "vqtimbre/trainer.hpp"
#include "vqtimbre/transfer.hpp"
#include "vqtimbre/wav.hpp"

namespace fs = std::filesystem;
using namespace vqt;

namespace {

constexpr int kOk = 0, kUsage = 1, kData = 2, kNumeric = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sub(const std::string& out, const char* dir) {
  auto p = fs::path(out) / dir;
  fs::create_directories(p);
  return p.string();
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what);
  if (!fs::exists(path)) throw UsageError(std::string(what) + " not found: " + path);
}

LoadedCheckpoint open_checkpoint(const std::string& path) {
  require_file(path, "checkpoint");
  return load_checkpoint(path);
}

Descriptor descriptor_arg(const std::string& name) {
  auto d = parse_descriptor(name);
  if (!d) throw UsageError("unknown descriptor '" + name + "' (centroid, bandwidth, f0, loudness)");
  return *d;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> read_targets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open targets file " + path);
  std::vector<double> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto c = line.find(','); c != std::string::npos) line = line.substr(c + 1);  // frame,value
    if (line.empty()) continue;
    try {
      out.push_back(std::stod(line));
    } catch (const std::exception&) {
      if (lineno == 1) continue;  // header
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": not a number");
    }
  }
  return out;
}

std::vector<double> parse_ramp(const std::string& spec) {
  std::string s = spec;
  std::replace(s.begin(), s.end(), ':', ',');
  auto parts = split_list(s);
  if (parts.size() != 3) throw UsageError("--ramp expects start:end:steps");
  const double a = std::stod(parts[0]), b = std::stod(parts[1]);
  const long n = std::stol(parts[2]);
  if (n < 1) throw UsageError("--ramp needs at least one step");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out = "out", resume;
  long long iters = -1;
  long long seed = -1;
  bool toy_corpus = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg;
  if (!a.config.empty()) {
    require_file(a.config, "config");
    cfg = RunConfig::load(a.config);
  }
  if (a.iters >= 0) cfg.train.iters = a.iters;
  if (a.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(a.seed);
  if (!a.data.empty()) cfg.data = a.data;

  CorpusOptions opt;
  opt.split_frac = cfg.train.split_frac;
  opt.silence_db = cfg.train.silence_db;
  opt.silence_frame = cfg.train.silence_frame;
  opt.seed = cfg.train.seed;
  opt.sample_rate = cfg.model.sample_rate;
  Corpus corpus;
  if (a.toy_corpus) {
    std::vector<NamedAudio> files;
    for (std::size_t f = 0; f < 3; ++f)
      files.push_back({"toy_" + std::to_string(f), synth_phrase(0, 6.0, f, cfg.model.sample_rate)});
    corpus = build_corpus(files, opt);
  } else {
    if (cfg.data.empty()) throw UsageError("no training data: set data= in the config, --data, or --toy-corpus");
    corpus = build_corpus(split_list(cfg.data), opt);
  }
  std::cerr << "corpus: " << corpus.train.size() << " train / " << corpus.test.size()
            << " test samples, " << corpus.skipped.size() << " skipped\n";

  std::unique_ptr<TimbreModel> model;
  std::optional<AdamState> adam;
  if (!a.resume.empty()) {
    auto ck = open_checkpoint(a.resume);
    model = std::move(ck.model);
    adam = std::move(ck.adam);
    if (!adam) throw UsageError("checkpoint has no optimiser state, cannot resume: " + a.resume);
    if (ck.seed != cfg.train.seed) std::cerr << "note: resuming with checkpoint seed " << ck.seed << "\n";
    cfg.train.seed = ck.seed;
  } else {
    model = std::make_unique<TimbreModel>(cfg.model, cfg.train.seed);
  }
  if (!cfg.percep_weights.empty()) {
    require_file(cfg.percep_weights, "perceptual weights");
    model->set_percep(std::make_shared<PercepNet>(PercepNet::load_weights(cfg.percep_weights)));
  }

  auto trainer = adam ? Trainer(*model, corpus.train, cfg.train, *adam)
                      : Trainer(*model, corpus.train, cfg.train);
  TrainOutputs outputs;
  outputs.log_csv = (fs::path(sub(a.out, "logs")) / "train.csv").string();
  outputs.checkpoint_dir = sub(a.out, "checkpoints");
  for (const auto& [k, v] : cfg.entries()) outputs.metadata["run." + k] = v;
  const auto report_every = std::max<long long>(1, cfg.train.iters / 20);
  train(trainer, outputs, [&](const LossRow& r) {
    if (r.iter % report_every == 0 || r.iter == cfg.train.iters)
      std::cerr << "iter " << r.iter << " total " << r.total << " stft " << r.stft
                << " codes " << r.codes_used << "\n";
  });
  std::cout << (fs::path(outputs.checkpoint_dir) / "last.vqtc").string() << "\n";
  return kOk;
}

int cmd_reconstruct(const std::string& ckpt, const std::string& input, const std::string& out,
                    std::uint64_t seed) {
  auto ck = open_checkpoint(ckpt);
  require_file(input, "input");
  auto x = wav_read(input, ck.model->config().sample_rate);
  auto r = transfer(*ck.model, x, seed);
  const auto path = (fs::path(sub(out, "audio")) / (stem(input) + "_recon.wav")).string();
  wav_write(path, r.output, ck.model->config().sample_rate);
  const std::size_t len = std::min(x.size(), r.output.size());
  std::cout << path << "\n";
  if (len >= LsdConfig{}.window) {
    const double d = lsd(std::span<const double>(x.data(), len), std::span<const double>(r.output.data(), len));
    std::ofstream((fs::path(sub(out, "reports")) / (stem(input) + "_recon.csv")).string())
        << "input,lsd\n" << input << "," << d << "\n";
    std::cout << "lsd " << d << "\n";
  }
  return kOk;
}

int cmd_transfer(const std::string& ckpt, const std::string& input, const std::string& out,
                 std::uint64_t seed) {
  auto ck = open_checkpoint(ckpt);
  require_file(input, "input");
  auto x = wav_read(input, ck.model->config().sample_rate);
  auto r = transfer(*ck.model, x, seed);
  const auto path = (fs::path(sub(out, "audio")) / (stem(input) + "_transfer.wav")).string();
  wav_write(path, r.output, ck.model->config().sample_rate);
  std::ofstream codes((fs::path(sub(out, "reports")) / (stem(input) + "_codes.csv")).string());
  codes << "frame_index,code_index,gain\n";
  codes.precision(10);
  for (std::size_t t = 0; t < r.gains.size(); ++t) {
    codes << t << ',';
    if (t < r.indices.size()) codes << r.indices[t];
    codes << ',' << r.gains[t] << '\n';
  }
  std::cout << path << "\n";
  return kOk;
}

int cmd_map(const std::string& ckpt, const std::string& descriptor, const std::string& out,
            std::uint64_t seed) {
  auto ck = open_checkpoint(ckpt);
  MapOptions opt;
  opt.seed = seed;
  auto map = map_codebook(*ck.model, descriptor_arg(descriptor), opt);
  const auto path = (fs::path(sub(out, "reports")) / ("map_" + descriptor + ".csv")).string();
  map.write_csv(path);
  std::cout << path << "\n" << map.valid_count() << "/" << map.size() << " valid entries\n";
  return kOk;
}

int cmd_synth(const std::string& ckpt, const std::string& descriptor, const std::string& ramp,
              const std::string& targets_csv, const std::string& map_csv, const std::string& out,
              std::uint64_t seed) {
  auto ck = open_checkpoint(ckpt);
  const auto d = descriptor_arg(descriptor);
  if (ramp.empty() == targets_csv.empty()) throw UsageError("give exactly one of --ramp or --targets");
  auto targets = ramp.empty() ? read_targets(targets_csv) : parse_ramp(ramp);
  DescriptorMap map;
  if (!map_csv.empty()) {
    require_file(map_csv, "descriptor map");
    map = DescriptorMap::read_csv(map_csv);
    if (map.descriptor != d) throw UsageError("map was built for another descriptor");
  } else {
    MapOptions opt;
    opt.seed = seed;
    map = map_codebook(*ck.model, d, opt);
    map.write_csv((fs::path(sub(out, "reports")) / ("map_" + descriptor + ".csv")).string());
  }
  auto r = synth_from_targets(*ck.model, map, targets, seed);
  const auto wav = (fs::path(sub(out, "audio")) / ("synth_" + descriptor + ".wav")).string();
  wav_write(wav, r.output, ck.model->config().sample_rate);
  const auto csv = (fs::path(sub(out, "reports")) / ("synth_" + descriptor + ".csv")).string();
  std::ofstream o(csv);
  o << "frame_index,target,achieved,code_index\n";
  o.precision(10);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    o << i << ',' << targets[i] << ',';
    if (i < r.achieved.size() && std::isfinite(r.achieved[i])) o << r.achieved[i];
    o << ',' << r.indices[i] << '\n';
  }
  std::cout << wav << "\n" << csv << "\n";
  std::cout << "spearman(target, achieved) " << spearman(targets, r.achieved) << "\n";
  return kOk;
}

struct EvalArgs {
  std::string config, out = "out";
  long long iters = 600;
  double seconds_per_class = 40.0;
  double segment_seconds = 1.0;
  std::size_t batch = 1;
  long long seed = 0;
};

int cmd_eval(const EvalArgs& a) {
  BenchmarkConfig b;
  if (!a.config.empty()) {
    require_file(a.config, "config");
    auto rc = RunConfig::load(a.config);
    b.model = rc.model;
    b.train = rc.train;
  } else {
    b.train.iters = a.iters;
    b.train.batch = a.batch;
    b.train.segment_seconds = a.segment_seconds;
    b.train.lr = 1e-3;
  }
  b.train.checkpoint_every = 0;
  b.corpus.seconds_per_class = a.seconds_per_class;
  b.corpus.seed = static_cast<std::uint64_t>(a.seed);
  b.seed = static_cast<std::uint64_t>(a.seed);
  b.classifier.seed = static_cast<std::uint64_t>(a.seed);
  b.out_dir = a.out;
  auto r = run_benchmark(b, [](const std::string& m) { std::cerr << m << "\n"; });
  std::cout << r.table;
  if (r.classifier.degenerate) std::cerr << "warning: classifier predicts a single label\n";
  return kOk;
}

int cmd_inspect(const std::string& ckpt, const std::string& usage_csv) {
  require_file(ckpt, "checkpoint");
  auto c = Container::load(ckpt);
  std::cout << "container version " << Container::kVersion << ", " << c.tensors.size() << " tensors\n";
  for (const auto& [k, v] : c.metadata) std::cout << k << " = " << v << "\n";
  std::size_t numel = 0;
  for (const auto& t : c.tensors) {
    if (t.name.rfind("adam.", 0) != 0 && t.name != "codebook.usage") numel += shape_numel(t.shape);
  }
  std::cout << "parameters " << numel << "\n";
  if (const auto* u = c.find("codebook.usage")) {
    std::size_t used = 0;
    double total = 0;
    for (double v : u->values) {
      used += v > 0;
      total += v;
    }
    std::cout << "codebook usage: " << used << "/" << u->values.size() << " codes used, "
              << static_cast<unsigned long long>(total) << " assignments\n";
    if (!usage_csv.empty()) {
      std::ofstream o(usage_csv);
      o << "code_index,count\n";
      for (std::size_t k = 0; k < u->values.size(); ++k)
        o << k << ',' << static_cast<unsigned long long>(u->values[k]) << '\n';
    }
  } else {
    std::cout << "no codebook (baseline model)\n";
  }
  return kOk;
}

int cmd_analyze(const std::string& input, const std::string& descriptor, const std::string& out) {
  require_file(input, "input");
  const auto d = descriptor_arg(descriptor);
  auto x = wav_read(input);
  FrameParams fp;
  auto curve = descriptor_curve(d, x, fp);
  const auto path = (fs::path(sub(out, "reports")) / (stem(input) + "_" + descriptor + ".csv")).string();
  write_curve_csv(path, curve, fp);
  std::cout << path << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vqtimbre: vector-quantized timbre transfer with filtered-noise synthesis"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model on WAV files");
  train->add_option("--config", ta.config, "key=value run configuration");
  train->add_option("--data", ta.data, "comma-separated WAV files or directories");
  train->add_option("--out", ta.out, "output directory");
  train->add_option("--iters", ta.iters, "override the iteration count");
  train->add_option("--seed", ta.seed, "override the seed");
  train->add_option("--resume", ta.resume, "continue from a checkpoint");
  train->add_flag("--toy-corpus", ta.toy_corpus, "train on the built-in synthetic toy corpus");

  std::string ckpt, input, out = "out", descriptor = "centroid", ramp, targets, map_csv, usage_csv;
  auto* recon = app.add_subcommand("reconstruct", "auto-encode a WAV file and report LSD");
  auto* xfer = app.add_subcommand("transfer", "timbre transfer of a WAV file");
  for (auto* c : {recon, xfer}) {
    c->add_option("--checkpoint", ckpt, "model checkpoint")->required();
    c->add_option("--input", input, "input WAV")->required();
    c->add_option("--out", out, "output directory");
    c->add_option("--seed", seed, "noise seed");
  }
  auto* map = app.add_subcommand("map-descriptors", "average descriptor value per code");
  map->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  map->add_option("--descriptor", descriptor, "centroid | bandwidth | f0 | loudness");
  map->add_option("--out", out, "output directory");
  map->add_option("--seed", seed, "noise seed");

  auto* synth = app.add_subcommand("synth-descriptor", "synthesize from a descriptor target series");
  synth->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  synth->add_option("--descriptor", descriptor, "centroid | bandwidth | f0 | loudness");
  synth->add_option("--ramp", ramp, "start:end:steps");
  synth->add_option("--targets", targets, "CSV of target values (last column)");
  synth->add_option("--map", map_csv, "descriptor map CSV (computed when omitted)");
  synth->add_option("--out", out, "output directory");
  synth->add_option("--seed", seed, "noise seed");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "synthetic transfer benchmark (baseline vs VQ)");
  eval->add_option("--config", ea.config, "run configuration for the per-class models");
  eval->add_option("--out", ea.out, "output directory");
  eval->add_option("--iters", ea.iters, "training steps per model (without --config)");
  eval->add_option("--seconds-per-class", ea.seconds_per_class, "synthetic audio per class");
  eval->add_option("--seed", ea.seed, "seed");

  auto* inspect = app.add_subcommand("inspect", "dump checkpoint metadata and codebook usage");
  inspect->add_option("--checkpoint", ckpt, "checkpoint or weight file")->required();
  inspect->add_option("--usage-csv", usage_csv, "write per-code usage counts");

  auto* analyze = app.add_subcommand("analyze", "descriptor curve of a WAV file as CSV");
  analyze->add_option("--input", input, "input WAV")->required();
  analyze->add_option("--descriptor", descriptor, "centroid | bandwidth | f0 | loudness");
  analyze->add_option("--out", out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (train->parsed()) return cmd_train(ta);
    if (recon->parsed()) return cmd_reconstruct(ckpt, input, out, seed);
    if (xfer->parsed()) return cmd_transfer(ckpt, input, out, seed);
    if (map->parsed()) return cmd_map(ckpt, descriptor, out, seed);
    if (synth->parsed()) return cmd_synth(ckpt, descriptor, ramp, targets, map_csv, out, seed);
    if (eval->parsed()) return cmd_eval(ea);
    if (inspect->parsed()) return cmd_inspect(ckpt, usage_csv);
    if (analyze->parsed()) return cmd_analyze(input, descriptor, out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
