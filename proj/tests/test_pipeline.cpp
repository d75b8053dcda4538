// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "criteria.hpp"
#include "support.hpp"
#include "vqtimbre/evaluate.hpp"
#include "vqtimbre/wav.hpp"

using namespace vqt;
using namespace vqt::testing;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / "vqt_test_pipeline" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double rms_db(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return 10 * std::log10(s / static_cast<double>(x.size()) + 1e-300);
}

TrainConfig quick_train(std::int64_t iters) {
  TrainConfig tc;
  tc.segment_seconds = 1.0;
  tc.batch = 1;
  tc.lr = 1e-3;
  tc.seed = 4;
  tc.iters = iters;
  tc.checkpoint_every = 0;
  return tc;
}

// One toy model trained briefly on phrases with gaps, shared across tests.
const TimbreModel& trained_toy() {
  static const auto model = [] {
    auto audio = synth_phrase(1, 8.0, 3);
    auto m = std::make_unique<TimbreModel>(ModelConfig::toy(), 4);
    Trainer t(*m, audio, quick_train(300));
    for (int s = 0; s < 300; ++s) t.step();
    return m;
  }();
  return *model;
}

}  // namespace

TEST_CASE("silence trimming drops quiet blocks only", "[corpus]") {
  std::vector<double> x(4096, 0.0);
  for (std::size_t i = 1024; i < 2048; ++i) x[i] = 0.1;
  auto t = trim_silence(x, 1024, -60.0);
  CHECK(t.size() == 1024);
  CHECK(trim_silence(std::vector<double>(5000, 0.0), 1024, -60.0).empty());
}

TEST_CASE("single-file corpus holds out the tail", "[corpus]") {
  auto a = synth_phrase(0, 4.0, 1);
  CorpusOptions opt;
  auto c = build_corpus(std::vector<NamedAudio>{{"a", a}}, opt);
  const auto total = c.train.size() + c.test.size();
  CHECK(c.test.size() == static_cast<std::size_t>(std::floor(0.15 * static_cast<double>(total))));
  CHECK(c.train_sources == std::vector<std::string>{"a"});
}

TEST_CASE("multi-file corpus split is seeded and skips silent files", "[corpus]") {
  std::vector<NamedAudio> in;
  for (std::uint64_t i = 0; i < 6; ++i) in.push_back({"f" + std::to_string(i), synth_phrase(i % 3, 2.0, i)});
  in.push_back({"quiet", std::vector<double>(20000, 0.0)});
  CorpusOptions opt;
  opt.seed = 5;
  auto a = build_corpus(in, opt), b = build_corpus(in, opt);
  CHECK(a.train == b.train);
  CHECK(a.test_sources == b.test_sources);
  CHECK(a.skipped == std::vector<std::string>{"quiet"});
  CHECK_FALSE(a.test_sources.empty());
  CHECK(a.train_sources.size() + a.test_sources.size() == 6);
  std::set<std::string> overlap;
  for (const auto& s : a.test_sources)
    if (std::find(a.train_sources.begin(), a.train_sources.end(), s) != a.train_sources.end()) overlap.insert(s);
  CHECK(overlap.empty());
  CHECK_THROWS(build_corpus(std::vector<NamedAudio>{{"q", std::vector<double>(5000, 0.0)}}, opt));
}

TEST_CASE("corpus from a directory skips unreadable files", "[corpus]") {
  auto dir = scratch("corpus");
  wav_write((dir / "b.wav").string(), synth_phrase(0, 1.5, 1));
  wav_write((dir / "a.wav").string(), synth_phrase(2, 1.5, 2));
  std::ofstream((dir / "broken.wav").string()) << "not a wav file";
  CorpusOptions opt;
  opt.split_frac = 0.0;
  auto c = build_corpus(std::vector<std::string>{dir.string()}, opt);
  CHECK(c.skipped.size() == 1);
  CHECK(c.train_sources.size() == 2);
}

TEST_CASE("synthetic corpus segments are never silent", "[corpus]") {
  auto corpus = synth_corpus(SynthCorpusConfig{3, 6.0, 2, 1, 22050.0});
  CHECK(corpus.size() == 6);
  CorpusOptions opt;
  std::vector<NamedAudio> in;
  for (const auto& f : corpus) in.push_back({f.name, f.samples});
  auto c = build_corpus(in, opt);
  std::mt19937_64 rng(3);
  const std::size_t seg = 22050;
  auto batch = sample_batch(c.train, 16, seg, rng);
  for (std::size_t b = 0; b < 16; ++b)
    CHECK(rms_db(batch.data().subspan(b * seg, seg)) > -60.0);
  CHECK(synth_class_name(0) != synth_class_name(1));
}

TEST_CASE("batches are reproducible from the rng", "[trainer]") {
  auto audio = synth_phrase(0, 2.0, 1);
  std::mt19937_64 a(9), b(9);
  auto x = sample_batch(audio, 3, 1000, a), y = sample_batch(audio, 3, 1000, b);
  CHECK(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
  CHECK_THROWS(sample_batch(audio, 1, audio.size() + 1, a));
}

TEST_CASE("training lowers the loss and logs every step", "[trainer]") {
  auto dir = scratch("train");
  auto audio = synth_phrase(0, 4.0, 2);
  TimbreModel m(ModelConfig::toy(), 1);
  auto tc = quick_train(40);
  tc.checkpoint_every = 20;
  Trainer t(m, audio, tc);
  TrainOutputs out{(dir / "log.csv").string(), (dir / "ckpt").string(), {{"run", "x"}}};
  auto rows = train(t, out);
  REQUIRE(rows.size() == 40);
  double first = 0, last = 0;
  for (int i = 0; i < 5; ++i) first += rows[static_cast<std::size_t>(i)].stft;
  for (int i = 35; i < 40; ++i) last += rows[static_cast<std::size_t>(i)].stft;
  CHECK(last < first);
  for (const auto& r : rows) CHECK(r.codes_used >= 1);
  CHECK(fs::exists(dir / "ckpt" / "step_00000020.vqtc"));
  CHECK(fs::exists(dir / "ckpt" / "last.vqtc"));
  std::ifstream log((dir / "log.csv").string());
  std::string line;
  std::getline(log, line);
  CHECK(line == loss_csv_header());
  int n = 0;
  while (std::getline(log, line)) ++n;
  CHECK(n == 40);
  auto ck = load_checkpoint((dir / "ckpt" / "last.vqtc").string());
  CHECK(ck.step == 40);
  CHECK(ck.metadata.at("run") == "x");
}

TEST_CASE("data codebook init copies distinct encoded frames", "[trainer]") {
  auto audio = synth_phrase(2, 3.0, 4);
  auto cfg = ModelConfig::toy();
  cfg.codebook_init = "data";
  TimbreModel a(cfg, 2), b(cfg, 2);
  const auto before = std::vector<double>(a.codebook().embeddings().data().begin(),
                                          a.codebook().embeddings().data().end());
  init_codebook_from_data(a, audio, 11025, 8);
  init_codebook_from_data(b, audio, 11025, 8);
  const auto ea = a.codebook().embeddings().data(), eb = b.codebook().embeddings().data();
  CHECK(std::equal(ea.begin(), ea.end(), eb.begin()));
  CHECK_FALSE(std::equal(ea.begin(), ea.end(), before.begin()));
  const std::size_t k = a.codebook().size(), d = a.codebook().dim();
  std::set<std::vector<double>> rows;
  for (std::size_t i = 0; i < k; ++i) rows.insert(std::vector<double>(ea.begin() + i * d, ea.begin() + (i + 1) * d));
  CHECK(rows.size() == k);
  CHECK_THROWS(cfg.set("codebook_init", "kmeans"));
}

TEST_CASE("seeded runs, save/load/save and resume are bit-exact", "[trainer]") {
  auto r = acceptance::persistence_numbers(scratch("persist").string());
  CHECK(r.identical_runs);
  CHECK(r.save_load_save);
  CHECK(r.resume_exact);
}

TEST_CASE("transfer keeps length and code range", "[transfer]") {
  const auto& m = trained_toy();
  auto src = synth_phrase(2, 2.0, 8);
  auto r = transfer(m, src, 1);
  CHECK(r.output.size() <= src.size());
  CHECK(src.size() - r.output.size() < m.config().window);
  CHECK(r.indices.size() == m.frame_count(src.size()));
  for (auto k : r.indices) CHECK(k < m.config().codebook_size);
  for (double g : r.gains) CHECK(g > 0.0);
  auto again = transfer(m, src, 1);
  CHECK(again.output == r.output);
  CHECK_THROWS_AS(transfer(m, std::vector<double>(100, 0.0)), DimensionError);
}

TEST_CASE("silence in, near-silence out", "[transfer]") {
  auto r = transfer(trained_toy(), std::vector<double>(22050, 0.0));
  for (double v : r.output) REQUIRE(std::isfinite(v));
  CHECK(rms_db(r.output) < -50.0);
}

TEST_CASE("self-transfer matches auto-encoding", "[transfer]") {
  const auto& m = trained_toy();
  auto x = synth_phrase(1, 2.0, 11);
  auto out = transfer(m, x, 2).output;
  // independent noise draw for the plain auto-encoding
  std::mt19937_64 rng(99);
  auto rec = m.infer(Tensor::from({x.size()}, x), rng);
  std::vector<double> tgt(x.begin(), x.begin() + static_cast<long>(out.size()));
  const double a = lsd(tgt, out, LsdConfig{512, 128, 1e-7});
  const double b = lsd(tgt, std::vector<double>(rec.output.data().begin(), rec.output.data().end()),
                       LsdConfig{512, 128, 1e-7});
  CHECK(std::abs(a - b) <= 0.1 * b);
}

TEST_CASE("louder input does not shrink the gains", "[transfer]") {
  const auto& m = trained_toy();
  auto x = synth_phrase(1, 2.0, 12);
  std::vector<double> x2(x);
  for (auto& v : x2) v *= 2.0;
  auto g1 = m.encode(Tensor::from({x.size()}, x)).g;
  auto g2 = m.encode(Tensor::from({x2.size()}, x2)).g;
  double s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < g1.numel(); ++i) {
    s1 += g1[i];
    s2 += g2[i];
  }
  CHECK(s2 >= s1);
}

TEST_CASE("descriptor map has one entry per code and is deterministic", "[transfer]") {
  const auto& m = trained_toy();
  auto a = map_codebook(m, Descriptor::kCentroid, MapOptions{16, 2, 3});
  auto b = map_codebook(m, Descriptor::kCentroid, MapOptions{16, 2, 3});
  CHECK(a.size() == m.config().codebook_size);
  CHECK(a.values == b.values);
  CHECK(a.valid_count() > 0);
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a.valid[k]) CHECK(std::isfinite(a.values[k]));
  auto path = (scratch("map") / "map.csv").string();
  a.write_csv(path);
  auto back = DescriptorMap::read_csv(path);
  CHECK(back.values == a.values);
  CHECK(back.valid == a.valid);
}

TEST_CASE("nearest map entry skips invalid codes and prefers the lowest index", "[transfer]") {
  DescriptorMap m;
  m.values = {1.0, 5.0, 3.0, 3.0};
  m.valid = {true, false, true, true};
  CHECK(m.nearest(4.9) == 2);
  CHECK(m.nearest(0.0) == 0);
  m.valid = {false, false, false, false};
  CHECK_THROWS(m.nearest(1.0));
}

TEST_CASE("synthesis from targets emits one code per target", "[transfer]") {
  const auto& m = trained_toy();
  auto map = map_codebook(m, Descriptor::kCentroid);
  std::vector<double> targets{500, 1000, 1500, 2000, 2500, 3000};
  auto s = synth_from_targets(m, map, targets, 1);
  CHECK(s.indices.size() == targets.size());
  CHECK(s.achieved.size() == targets.size());
  CHECK(s.output.size() == (targets.size() - 1) * m.config().stride + m.config().window);
  for (std::size_t i = 0; i < targets.size(); ++i) CHECK(s.indices[i] == map.nearest(targets[i]));
}

TEST_CASE("spearman uses average ranks", "[transfer]") {
  std::vector<double> a{1, 2, 3, 4, 5}, b{2, 4, 6, 8, 100}, c{5, 4, 3, 2, 1};
  CHECK(spearman(a, b) == Catch::Approx(1.0));
  CHECK(spearman(a, c) == Catch::Approx(-1.0));
  std::vector<double> d{1, 1, 2, 2};
  std::vector<double> e{1, 2, 3, 4};
  // ranks 1.5 1.5 3.5 3.5 vs 1 2 3 4
  CHECK(spearman(d, e) == Catch::Approx(0.8 / std::sqrt(0.8)).epsilon(1e-12));
  std::vector<double> f{1, std::nan(""), 3, 4}, g{1, 2, 3, 4};
  CHECK(spearman(f, g) == Catch::Approx(1.0));
}

TEST_CASE("classifier training is seeded and flags augmentation in its checksum", "[classifier]") {
  auto corpus = synth_corpus(SynthCorpusConfig{3, 8.0, 2, 2, 22050.0});
  ClassifierConfig cc;
  cc.epochs = 1;
  ClassifierReport r1, r2, r3;
  train_classifier(corpus, cc, &r1);
  train_classifier(corpus, cc, &r2);
  CHECK(r1.train_checksum == r2.train_checksum);
  CHECK(r1.heldout_accuracy == r2.heldout_accuracy);
  auto plain = cc;
  plain.augment_semitones.clear();
  train_classifier(corpus, plain, &r3);
  CHECK(r3.train_checksum != r1.train_checksum);
  CHECK(r3.train_frames < r1.train_frames);
  std::vector<LabeledAudio> one(corpus.begin(), corpus.begin() + 2);
  for (auto& f : one) f.label = 0;
  CHECK_THROWS(train_classifier(one, cc));
}

TEST_CASE("classifier reports degenerate predictions", "[classifier]") {
  // two identical classes cannot be told apart
  auto a = synth_phrase(0, 6.0, 1);
  std::vector<LabeledAudio> corpus{{"x", 0, "x", a}, {"y", 1, "y", a}};
  ClassifierConfig cc;
  cc.epochs = 1;
  cc.augment_semitones.clear();
  ClassifierReport r;
  train_classifier(corpus, cc, &r);
  CHECK(r.degenerate);
  CHECK(r.heldout_accuracy == Catch::Approx(0.5).margin(0.01));
}

TEST_CASE("pitch shift moves a sine by the semitone ratio", "[classifier]") {
  auto x = sine(22050, 440.0, 0.5);
  auto y = pitch_shift(x, 12.0);
  auto t = f0_track(y);
  REQUIRE(t.voiced_count() > 0);
  CHECK(t.voiced_values()[0] == Catch::Approx(880.0).margin(2.0));
}

TEST_CASE("eval report round trips through csv", "[eval]") {
  EvalReport r;
  r.model = "vq";
  r.rows = {{"a", 0.5, 0.1, 0.2, 1.5, 100}, {"b", 0.25, 0.3, 0.4, 2.5, 50}};
  auto back = EvalReport::from_csv(r.to_csv());
  CHECK(back.model == "vq");
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[1].lsd == 2.5);
  CHECK(back.rows[1].frames == 50);
  auto avg = r.average();
  CHECK(avg.accuracy == Catch::Approx(0.375));
  CHECK(avg.lsd == Catch::Approx(2.0));
  auto table = format_table(r, back);
  CHECK(table.find("average") != std::string::npos);
  CHECK(table.find("0.3750") != std::string::npos);
}

TEST_CASE("report average leaves nan cells out of their column", "[eval]") {
  EvalReport r;
  r.rows = {{"a", 0.5, std::nan(""), 0.2, 1.0, 10}, {"b", 0.1, 0.3, 0.4, 3.0, 20}};
  auto avg = r.average();
  CHECK(avg.dtw_f0 == Catch::Approx(0.3));
  CHECK(avg.dtw_loudness == Catch::Approx(0.3));
  CHECK(avg.frames == 30);
  r.rows[1].dtw_f0 = std::nan("");
  CHECK(std::isnan(r.average().dtw_f0));
}

TEST_CASE("identity transfer scores perfect alignment", "[eval]") {
  auto corpus = synth_corpus(SynthCorpusConfig{3, 8.0, 2, 6, 22050.0});
  ClassifierConfig cc;
  cc.epochs = 2;
  auto clf = train_classifier(corpus, cc);
  DomainData d;
  d.name = synth_class_name(0);
  d.target_class = 0;
  for (const auto& f : corpus)
    if (f.label == 0) {
      d.sources.push_back(f.samples);
      d.target_test.push_back(f.samples);
    }
  TransferFn identity = [](std::span<const double> x) { return std::vector<double>(x.begin(), x.end()); };
  auto row = evaluate_domain(identity, d, clf);
  CHECK(row.dtw_f0 == 0.0);
  CHECK(row.dtw_loudness == 0.0);
  CHECK(row.lsd == 0.0);
  CHECK(row.frames > 0);
  CHECK(row.accuracy > 0.5);
}
