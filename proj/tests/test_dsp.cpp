// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>

#include "criteria.hpp"
#include "support.hpp"
#include "vqtimbre/resample.hpp"
#include "vqtimbre/wav.hpp"

using namespace vqt;
using namespace vqt::testing;

namespace {

// Frequency from upward zero crossings, linearly interpolated.
double crossing_frequency(const std::vector<double>& x, double sr, std::size_t skip) {
  std::vector<double> times;
  for (std::size_t i = skip; i + 1 < x.size() - skip; ++i)
    if (x[i] < 0 && x[i + 1] >= 0) times.push_back(static_cast<double>(i) + x[i] / (x[i] - x[i + 1]));
  return static_cast<double>(times.size() - 1) * sr / (times.back() - times.front());
}

}  // namespace

TEST_CASE("hann window is periodic and COLA at quarter hop", "[filterbank]") {
  auto w = hann_window(8);
  CHECK(w[0] == 0.0);
  CHECK(w[4] == Catch::Approx(1.0));
  double dev = 1.0;
  const double c = cola_constant(hann_window(512), 128, &dev);
  CHECK(c == Catch::Approx(2.0).epsilon(1e-12));
  CHECK(dev < 1e-12);
}

TEST_CASE("filterbank reconstructs interiors and matches the direct DFT", "[filterbank]") {
  for (std::size_t window : {std::size_t{64}, std::size_t{512}, std::size_t{2048}}) {
    auto r = acceptance::filterbank_numbers(window, window);
    INFO("L=" << window);
    CHECK(r.recon_rel < 1e-6);
    CHECK(r.dft_abs < 1e-8);
  }
}

TEST_CASE("filterbank basis rejects bad geometry", "[filterbank]") {
  CHECK_THROWS_AS(FilterbankBasis::make(511, 128), std::invalid_argument);
  CHECK_THROWS_AS(FilterbankBasis::make(512, 0), std::invalid_argument);
  CHECK_THROWS_AS(FilterbankBasis::make(512, 513), std::invalid_argument);
  auto b = FilterbankBasis::make(512, 128);
  CHECK(b.bins() == 514);
  CHECK(b.frame_count(511) == 0);
  CHECK(b.frame_count(512 + 3 * 128) == 4);
  CHECK(b.output_length(4) == 512 + 3 * 128);
  CHECK_THROWS_AS(fourier_frames(Tensor::zeros({100}), b), DimensionError);
  CHECK_THROWS_AS(overlap_add(Tensor::zeros({3, 513}), b), DimensionError);
}

TEST_CASE("stft magnitude of a bin-centred sine peaks at its bin", "[spectral]") {
  const std::size_t n = 256;
  std::vector<double> x(4 * n);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::cos(2 * std::numbers::pi * 10.0 * i / n);
  std::size_t frames = 0;
  auto mag = stft_magnitude(x, n, n / 4, &frames);
  REQUIRE(frames == 13);
  // Hann main lobe: n/4 at the bin, n/8 at its neighbours
  CHECK(mag[10] == Catch::Approx(n / 4.0).epsilon(1e-10));
  CHECK(mag[9] == Catch::Approx(n / 8.0).epsilon(1e-10));
  CHECK(mag[30] < 1e-9);
}

TEST_CASE("multiscale stft loss is zero on identical inputs and skips long windows", "[spectral]") {
  std::mt19937_64 rng(3);
  auto a = random_tensor({300}, rng, -1, 1, false);
  MultiScaleStftConfig cfg{{64, 128, 1024}, 0.25};
  CHECK(multiscale_stft_loss(a, a, cfg).item() == 0.0);
  auto b = random_tensor({300}, rng, -1, 1, false);
  auto both = multiscale_stft_loss(a, b, cfg).item();
  auto only = multiscale_stft_loss(a, b, MultiScaleStftConfig{{64, 128}, 0.25}).item();
  CHECK(both == only);
  CHECK_THROWS_AS(multiscale_stft_loss(a, a, MultiScaleStftConfig{{512}, 0.25}), DimensionError);
}

TEST_CASE("lsd matches a direct DFT oracle", "[metrics]") {
  std::mt19937_64 rng(4);
  auto x = random_vector(3000, rng), y = random_vector(3000, rng);
  LsdConfig lc{128, 32, 1e-7};
  CHECK(lsd(x, x, lc) == 0.0);
  CHECK(lsd(x, y, lc) == Catch::Approx(acceptance::lsd_oracle(x, y, 128, 32, 1e-7)).epsilon(1e-10));
  CHECK(lsd(x, y, lc) == Catch::Approx(lsd(y, x, lc)).epsilon(1e-12));
  // silence against silence hits the floor on both sides
  std::vector<double> z(3000, 0.0);
  CHECK(lsd(z, z, lc) == 0.0);
  CHECK_THROWS_AS(lsd(x, std::vector<double>(10), lc), DimensionError);
}

TEST_CASE("dtw equals exhaustive enumeration", "[metrics]") {
  auto r = acceptance::metric_numbers();
  CHECK(r.dtw_pairs == 200);
  CHECK(r.dtw_err < 1e-12);
  CHECK(r.dtw_self == 0.0);
  CHECK(r.dtw_example == 0.0);
}

TEST_CASE("dtw path is monotone and spans both series", "[metrics]") {
  std::vector<double> a{0, 2, 1, 3}, b{0, 1, 1, 2, 3, 3};
  auto r = dtw_raw(a, b);
  REQUIRE(!r.path.empty());
  CHECK(r.path.front() == std::pair<std::size_t, std::size_t>{0, 0});
  CHECK(r.path.back() == std::pair<std::size_t, std::size_t>{3, 5});
  for (std::size_t i = 1; i < r.path.size(); ++i) {
    const auto di = r.path[i].first - r.path[i - 1].first;
    const auto dj = r.path[i].second - r.path[i - 1].second;
    CHECK(di <= 1);
    CHECK(dj <= 1);
    CHECK(di + dj >= 1);
  }
  CHECK(r.distance == Catch::Approx(r.cost / static_cast<double>(r.path.size())));
  CHECK_THROWS(dtw(std::vector<double>{}, b));
  // constant series scale to zeros
  CHECK(dtw(std::vector<double>{5, 5, 5}, std::vector<double>{-1, -1}).distance == 0.0);
}

TEST_CASE("f0 tracks sines within 1 Hz", "[descriptors]") {
  for (double hz : {110.0, 220.0, 440.0, 880.0}) {
    auto track = f0_track(sine(22050, hz, 0.5));
    REQUIRE(track.voiced_count() == track.hz.size());
    for (double f : track.hz) CHECK(std::abs(f - hz) < 1.0);
  }
}

TEST_CASE("f0 marks silence and noise unvoiced", "[descriptors]") {
  std::vector<double> quiet(22050, 0.0);
  CHECK(f0_track(quiet).voiced_count() == 0);
  std::mt19937_64 rng(9);
  auto noise = random_vector(22050, rng);
  auto t = f0_track(noise);
  CHECK(t.voiced_count() < t.hz.size() / 4);
}

TEST_CASE("loudness follows amplitude in dB", "[descriptors]") {
  auto a = loudness_curve(sine(8192, 440, 1.0));
  auto b = loudness_curve(sine(8192, 440, 0.1));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == Catch::Approx(20 * std::log10(1 / std::sqrt(2.0))).margin(0.05));
    CHECK(a[i] - b[i] == Catch::Approx(20.0).margin(1e-9));
  }
  CHECK(loudness_curve(std::vector<double>(4096, 0.0))[0] == -90.0);
}

TEST_CASE("centroid and bandwidth of a pure tone", "[descriptors]") {
  // bin-centred tone: centroid on the tone, bandwidth a fraction of a bin
  const double df = 22050.0 / 2048.0;
  auto x = sine(8192, 100 * df, 0.5);
  for (double c : spectral_centroid(x)) CHECK(c == Catch::Approx(100 * df).epsilon(1e-6));
  for (double b : spectral_bandwidth(x)) CHECK(b < df);
  // brighter mixture has a higher centroid
  auto lo = sine(8192, 300, 0.5), hi = sine(8192, 3000, 0.5);
  CHECK(spectral_centroid(hi)[0] > spectral_centroid(lo)[0]);
}

TEST_CASE("descriptor names round-trip", "[descriptors]") {
  for (auto d : {Descriptor::kCentroid, Descriptor::kBandwidth, Descriptor::kF0, Descriptor::kLoudness})
    CHECK(parse_descriptor(descriptor_name(d)) == d);
  CHECK_FALSE(parse_descriptor("brightness").has_value());
}

TEST_CASE("resampling keeps a 1 kHz sine within 0.1 Hz", "[resample]") {
  auto x = sine(2 * 44100, 1000.0, 0.8, 44100.0);
  auto y = resample(x, 44100.0, 22050.0);
  CHECK(y.size() == 44100);
  CHECK(crossing_frequency(y, 22050.0, 200) == Catch::Approx(1000.0).margin(0.1));
  auto up = resample(y, 22050.0, 48000.0);
  CHECK(crossing_frequency(up, 48000.0, 400) == Catch::Approx(1000.0).margin(0.1));
  // identity rate returns the input
  auto same = resample(x, 44100.0, 44100.0);
  CHECK(same == x);
}

TEST_CASE("downsampling removes content above the new Nyquist", "[resample]") {
  auto x = sine(44100, 15000.0, 0.8, 44100.0);
  auto y = resample(x, 44100.0, 22050.0);
  std::vector<double> mid(y.begin() + 1000, y.end() - 1000);
  CHECK(20 * std::log10(rms(mid) / (0.8 / std::sqrt(2.0))) < -60.0);
}

TEST_CASE("wav round trips in float32 and pcm16", "[wav]") {
  std::mt19937_64 rng(2);
  auto x = random_vector(1000, rng, -0.9, 0.9);
  auto f = wav_decode(wav_encode(x, 22050.0, WavFormat::kFloat32));
  CHECK(f.sample_rate == 22050.0);
  CHECK(f.channels == 1);
  CHECK(f.format == WavFormat::kFloat32);
  REQUIRE(f.frames() == 1000);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(f.interleaved[i] == static_cast<double>(static_cast<float>(x[i])));
  auto p = wav_decode(wav_encode(x, 16000.0, WavFormat::kPcm16));
  CHECK(p.format == WavFormat::kPcm16);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(p.interleaved[i] - x[i]) <= 1.0 / 32767);
}

TEST_CASE("wav clips out-of-range pcm16 samples", "[wav]") {
  std::vector<double> x{2.0, -2.0, 0.0};
  auto p = wav_decode(wav_encode(x, 8000.0, WavFormat::kPcm16));
  CHECK(p.interleaved[0] == Catch::Approx(1.0).margin(1e-4));
  CHECK(p.interleaved[1] == Catch::Approx(-1.0).margin(1e-4));
}

TEST_CASE("wav decoder reports malformed input with offsets", "[wav]") {
  auto good = wav_encode(std::vector<double>(16, 0.25), 22050.0, WavFormat::kPcm16);
  CHECK_THROWS_AS(wav_decode(std::span<const std::uint8_t>(good.data(), 6)), WavError);
  auto bad = good;
  std::memcpy(bad.data(), "RIFX", 4);
  try {
    wav_decode(bad);
    FAIL("expected WavError");
  } catch (const WavError& e) {
    CHECK(e.offset() == 0);
    CHECK(std::string(e.what()).find("byte offset 0") != std::string::npos);
  }
  // truncated data chunk
  auto cut = good;
  cut.resize(cut.size() - 5);
  CHECK_THROWS_AS(wav_decode(cut), WavError);
}

TEST_CASE("wav downmixes stereo and resamples on read", "[wav]") {
  const auto dir = std::filesystem::temp_directory_path() / "vqt_test_wav";
  std::filesystem::create_directories(dir);
  // hand-built stereo pcm16 file
  std::vector<std::uint8_t> bytes;
  auto put32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i))); };
  auto put16 = [&](std::uint16_t v) { for (int i = 0; i < 2; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i))); };
  auto tag = [&](const char* s) { bytes.insert(bytes.end(), s, s + 4); };
  const std::uint32_t frames = 4;
  tag("RIFF"); put32(36 + frames * 4); tag("WAVE");
  tag("fmt "); put32(16); put16(1); put16(2); put32(44100); put32(44100 * 4); put16(4); put16(16);
  tag("data"); put32(frames * 4);
  for (std::uint32_t i = 0; i < frames; ++i) { put16(16384); put16(static_cast<std::uint16_t>(-16384 + 8192)); }
  auto a = wav_decode(bytes);
  CHECK(a.channels == 2);
  auto m = a.mono();
  REQUIRE(m.size() == 4);
  CHECK(m[0] == Catch::Approx((16384.0 - 8192.0) / 2 / 32768.0));

  auto path = (dir / "tone.wav").string();
  wav_write(path, sine(44100, 1000.0, 0.5, 44100.0), 44100.0);
  auto y = wav_read(path, 22050.0);
  CHECK(y.size() == 22050);
  CHECK(crossing_frequency(y, 22050.0, 200) == Catch::Approx(1000.0).margin(0.1));
  CHECK_THROWS_AS(wav_read((dir / "missing.wav").string()), std::runtime_error);
}
