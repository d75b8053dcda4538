// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "support.hpp"
#include "vqtimbre/model.hpp"
#include "vqtimbre/synth_corpus.hpp"

using namespace vqt;
using namespace vqt::testing;

namespace {

ModelConfig tiny() {
  auto c = ModelConfig::toy();
  c.window = 64;
  c.stride = 16;
  c.latent_dim = 4;
  c.codebook_size = 8;
  c.enc_layers = 3;
  c.enc_channels_first = 2;
  c.enc_channels_last = 4;
  c.enc_kernel = 5;
  c.dec_hidden = 8;
  c.dec_block_layers = 2;
  c.gain_hidden = 4;
  c.stft_windows = {32, 64};
  return c;
}

Tensor tone(std::size_t n) { return Tensor::from({n}, sine(n, 700.0, 0.5)); }

}  // namespace

TEST_CASE("toy configuration matches the desk-scale setting", "[model]") {
  auto c = ModelConfig::toy();
  CHECK(c.window == 512);
  CHECK(c.stride == 128);
  CHECK(c.latent_dim == 16);
  CHECK(c.codebook_size == 32);
  CHECK(c.bins() == 514);
  CHECK(c.stft_windows == std::vector<std::size_t>{128, 256, 512});
  CHECK_NOTHROW(c.validate());
  CHECK(c.encoder_channels(0) == c.enc_channels_first);
  CHECK(c.encoder_channels(c.enc_layers - 1) == c.enc_channels_last);
}

TEST_CASE("config validation and key round trip", "[model]") {
  auto c = tiny();
  ModelConfig d;
  for (const auto& [k, v] : c.to_entries()) REQUIRE(d.set(k, v));
  CHECK(d.to_entries() == c.to_entries());
  CHECK_FALSE(d.set("no_such_key", "1"));
  d.window = 63;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  d = c;
  d.stride = 0;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  CHECK_THROWS(d.set("window", "abc"));
}

TEST_CASE("forward shapes and output length", "[model]") {
  TimbreModel m(tiny(), 1);
  const std::size_t n = 64 + 10 * 16 + 5;
  std::mt19937_64 rng(2);
  auto f = m.forward(tone(n), rng);
  const std::size_t t = m.frame_count(n);
  CHECK(t == 11);
  CHECK(f.z.shape() == Shape{t, 4});
  CHECK(f.filters.shape() == Shape{t, 66});
  CHECK(f.gains.shape() == Shape{t});
  CHECK(f.output.numel() == (t - 1) * 16 + 64);
  CHECK(f.indices.size() == t);
  for (double g : f.gains.data()) CHECK(g > 0.0);
  for (double h : f.filters.data()) {
    CHECK(h > 0.0);
    CHECK(h < std::log(2.0));
  }
}

TEST_CASE("fresh encoder output follows its input", "[model]") {
  std::vector<double> audio;
  for (std::size_t c = 0; c < 3; ++c) {
    auto p = synth_phrase(c, 2.0, c);
    audio.insert(audio.end(), p.begin(), p.end());
  }
  TimbreModel m(ModelConfig::toy(), 1);
  auto z = m.encode(Tensor::from({audio.size()}, audio)).z;
  const std::size_t t = z.dim(0), d = z.dim(1);
  double spread = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mu = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      mu += z[i * d + j];
      sq += z[i * d + j] * z[i * d + j];
    }
    mu /= static_cast<double>(t);
    spread += std::sqrt(std::max(0.0, sq / static_cast<double>(t) - mu * mu));
  }
  CHECK(spread / static_cast<double>(d) > 0.01);
  for (const auto& [name, p] : m.params())
    if (name.ends_with(".bias") && name.rfind("dec.gru", 0) != 0)
      for (double v : p.data()) CHECK(v == 0.0);
}

TEST_CASE("zeroed decoder emits log 1.5 everywhere", "[model]") {
  TimbreModel m(tiny(), 1);
  for (auto& [name, p] : m.params())
    if (name.rfind("dec.", 0) == 0)
      for (auto& v : p.mutable_data()) v = 0.0;
  std::mt19937_64 rng(3);
  auto codes = random_tensor({5, 4}, rng, -1, 1, false);
  auto h = m.decode(codes);
  for (double v : h.data()) CHECK(v == Catch::Approx(std::log(1.5)).epsilon(1e-15));
}

TEST_CASE("decoder recurrence carries state across frames", "[model]") {
  TimbreModel m(tiny(), 1);
  std::mt19937_64 rng(4);
  auto codes = random_tensor({1, 4}, rng, -1, 1, false);
  auto repeated = stack_rows(std::vector<Tensor>{row(codes, 0), row(codes, 0), row(codes, 0)});
  auto h = m.decode(repeated);
  // identical inputs, different outputs: the GRU state is live
  double diff = 0.0;
  for (std::size_t k = 0; k < h.dim(1); ++k) diff += std::abs(h[k] - h[h.dim(1) + k]);
  CHECK(diff > 1e-6);
  // threading state through two calls equals one call
  Tensor state;
  auto a = m.decode(gather_rows(repeated, std::vector<std::size_t>{0, 1}), &state);
  auto b = m.decode(gather_rows(repeated, std::vector<std::size_t>{2}), &state);
  for (std::size_t k = 0; k < h.dim(1); ++k) CHECK(b[k] == Catch::Approx(h[2 * h.dim(1) + k]).epsilon(1e-14));
}

TEST_CASE("synthesis is silent at zero gain and linear in gain", "[model]") {
  TimbreModel m(tiny(), 1);
  const std::size_t n = 64 + 7 * 16;
  std::mt19937_64 r1(5), r2(5);
  auto u1 = m.noise_frames(n, r1);
  auto t = u1.frames();
  std::mt19937_64 hr(6);
  auto h = random_tensor({t, 66}, hr, 0, 0.69, false);
  auto zero = m.synthesize(h, Tensor::zeros({t}), u1);
  for (double v : zero.data()) CHECK(v == 0.0);
  auto one = m.synthesize(h, Tensor::full({t}, 1.0), u1);
  auto three = m.synthesize(h, Tensor::full({t}, 3.0), m.noise_frames(n, r2));
  for (std::size_t i = 0; i < one.numel(); ++i) CHECK(three[i] == Catch::Approx(3 * one[i]).margin(1e-12));
  CHECK_THROWS_AS(m.synthesize(h, Tensor::full({t + 1}, 1.0), u1), DimensionError);
}

TEST_CASE("a low-pass filter leaves no energy above its cutoff", "[model]") {
  // raised-cosine pass band, zero from bin 64 up; a brickwall edge leaks through
  // the untapered frame boundaries at about -40 dB
  auto cfg = tiny();
  cfg.window = 512;
  cfg.stride = 128;
  TimbreModel m(cfg, 1);
  const std::size_t n = 512 + 60 * 128, half = 257, cut = 64;
  std::mt19937_64 rng(7);
  auto u = m.noise_frames(n, rng);
  const std::size_t t = u.frames();
  std::vector<double> h(t * 514, 0.0);
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t k = 0; k < cut; ++k) {
      const double c = std::cos(std::numbers::pi * static_cast<double>(k) / (2.0 * cut));
      h[f * 514 + k] = h[f * 514 + half + k] = 0.5 * c * c;
    }
  auto y = m.synthesize(Tensor::from({t, 514}, h), Tensor::full({t}, 1.0), u);
  std::vector<double> body(y.data().begin() + 512, y.data().end() - 512);
  auto mag = stft_magnitude(body, 512, 128);
  double total = 0.0, above = 0.0;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    const double e = mag[i] * mag[i];
    total += e;
    if (i % half >= cut) above += e;
  }
  CHECK(10 * std::log10(above / total) < -60.0);
}

TEST_CASE("baseline drops the codebook and gain head", "[model]") {
  auto c = tiny();
  TimbreModel vq(c, 1);
  c.quantized = false;
  TimbreModel base(c, 1);
  CHECK_FALSE(base.params().contains("codebook.embeddings"));
  CHECK_FALSE(base.params().contains("enc.gain0.weight"));
  std::size_t extra = 0;
  for (const auto& [name, p] : vq.params())
    if (!base.params().contains(name)) extra += p.numel();
  CHECK(vq.parameter_count() - base.parameter_count() == extra);
  // K d_z + gain head
  const std::size_t flat = vq.params().get("enc.gain0.weight").dim(1);
  CHECK(extra == 8 * 4 + (flat * 4 + 4) + (4 + 1));
  std::mt19937_64 rng(1);
  auto f = base.forward(tone(200), rng);
  CHECK(f.indices.empty());
  for (double g : f.gains.data()) CHECK(g == 1.0);
}

TEST_CASE("objective combines its terms", "[model]") {
  TimbreModel m(tiny(), 1);
  std::mt19937_64 rng(8);
  auto x = tone(300);
  auto f = m.forward(x, rng);
  auto l = m.objective(x, f);
  const auto& c = m.config();
  CHECK(l.total_value() ==
        Catch::Approx(c.lambda_stft * l.stft + c.lambda_latent * (l.codebook + c.beta * l.commit)));
  CHECK(l.percep == 0.0);
  CHECK(l.codebook == Catch::Approx(l.commit));
  backward(l.total);
  CHECK(m.params().get("codebook.embeddings").has_grad());
  CHECK(m.params().get("enc.conv0.weight").has_grad());
}

TEST_CASE("perceptual term enters with its weight", "[model]") {
  TimbreModel m(tiny(), 1);
  PercepConfig pc;
  pc.layers = 2;
  pc.kernel = 5;
  pc.base_channels = 2;
  m.set_percep(std::make_shared<PercepNet>(PercepNet::random_init(pc, 4)));
  std::mt19937_64 rng(8);
  auto x = tone(300);
  auto f = m.forward(x, rng);
  auto l = m.objective(x, f);
  CHECK(l.percep > 0.0);
  const auto& c = m.config();
  CHECK(l.total_value() == Catch::Approx(c.lambda_stft * l.stft + c.lambda_percep * l.percep +
                                         c.lambda_latent * (l.codebook + c.beta * l.commit)));
}

TEST_CASE("non-finite loss names the component", "[model]") {
  TimbreModel m(tiny(), 1);
  std::mt19937_64 rng(8);
  auto x = tone(300);
  auto f = m.forward(x, rng);
  std::vector<double> bad(x.data().begin(), x.data().end());
  bad[10] = std::numeric_limits<double>::quiet_NaN();
  try {
    m.objective(Tensor::from({bad.size()}, bad), f);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("stft") != std::string::npos);
  }
}

TEST_CASE("seeded construction and inference are deterministic", "[model]") {
  TimbreModel a(tiny(), 11), b(tiny(), 11), c(tiny(), 12);
  auto x = tone(400);
  std::mt19937_64 r1(1), r2(1);
  auto fa = a.infer(x, r1), fb = b.infer(x, r2);
  for (std::size_t i = 0; i < fa.output.numel(); ++i) CHECK(fa.output[i] == fb.output[i]);
  CHECK(a.params().get("dec.head.weight")[0] != c.params().get("dec.head.weight")[0]);
  // infer leaves usage untouched, forward with counting does not
  CHECK(a.codebook().total_usage() == 0);
  std::mt19937_64 r3(1);
  a.forward(x, r3, true);
  CHECK(a.codebook().total_usage() == fa.indices.size());
}

TEST_CASE("tied bins share real and imaginary responses", "[model]") {
  auto c = tiny();
  c.tied_bins = true;
  TimbreModel m(c, 1);
  std::mt19937_64 rng(2);
  auto h = m.decode(random_tensor({3, 4}, rng, -1, 1, false));
  REQUIRE(h.dim(1) == 66);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t k = 0; k < 33; ++k) CHECK(h[t * 66 + k] == h[t * 66 + 33 + k]);
}

TEST_CASE("checkpoints round trip bit-exactly", "[model][io]") {
  const auto dir = std::filesystem::temp_directory_path() / "vqt_test_model";
  std::filesystem::create_directories(dir);
  TimbreModel m(tiny(), 3);
  m.codebook().usage_counts()[2] = 17;
  AdamState st;
  st.init(m.params());
  st.step = 5;
  st.m[0][0] = 0.25;
  CheckpointExtras ex{3, 5, &st, {{"note", "hello"}}};
  const auto p1 = (dir / "a.vqtc").string(), p2 = (dir / "b.vqtc").string();
  save_checkpoint(p1, m, ex);
  auto loaded = load_checkpoint(p1);
  CHECK(loaded.seed == 3);
  CHECK(loaded.step == 5);
  CHECK(loaded.metadata.at("note") == "hello");
  REQUIRE(loaded.adam);
  CHECK(loaded.adam->step == 5);
  CHECK(loaded.adam->m[0][0] == 0.25);
  CHECK(loaded.model->codebook().usage_counts()[2] == 17);
  CHECK(loaded.model->config().to_entries() == m.config().to_entries());
  for (const auto& [name, p] : m.params()) {
    const auto& q = loaded.model->params().get(name);
    for (std::size_t i = 0; i < p.numel(); ++i) CHECK(p[i] == q[i]);
  }
  CheckpointExtras ex2{loaded.seed, loaded.step, &*loaded.adam, loaded.metadata};
  save_checkpoint(p2, *loaded.model, ex2);
  std::ifstream a(p1, std::ios::binary), b(p2, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
  CHECK_THROWS(load_checkpoint((dir / "missing.vqtc").string()));
}
