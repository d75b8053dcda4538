// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/synth_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

#include "vqtimbre/params.hpp"

namespace vqt {

namespace {

constexpr double kPi = std::numbers::pi;

// RBJ cookbook biquad, direct form I.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  static Biquad lowpass(double f, double q, double sr) {
    const double w = 2 * kPi * f / sr, c = std::cos(w), alpha = std::sin(w) / (2 * q);
    const double a0 = 1 + alpha;
    Biquad bq;
    bq.b0 = (1 - c) / 2 / a0;
    bq.b1 = (1 - c) / a0;
    bq.b2 = (1 - c) / 2 / a0;
    bq.a1 = -2 * c / a0;
    bq.a2 = (1 - alpha) / a0;
    return bq;
  }
  // constant 0 dB peak gain
  static Biquad bandpass(double f, double q, double sr) {
    const double w = 2 * kPi * f / sr, c = std::cos(w), alpha = std::sin(w) / (2 * q);
    const double a0 = 1 + alpha;
    Biquad bq;
    bq.b0 = alpha / a0;
    bq.b1 = 0;
    bq.b2 = -alpha / a0;
    bq.a1 = -2 * c / a0;
    bq.a2 = (1 - alpha) / a0;
    return bq;
  }
  double operator()(double x) {
    const double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

double poly_blep(double t, double dt) {
  if (t < dt) {
    t /= dt;
    return t + t - t * t - 1.0;
  }
  if (t > 1.0 - dt) {
    t = (t - 1.0) / dt;
    return t * t + t + t + 1.0;
  }
  return 0.0;
}

struct Note {
  std::size_t start, length;
  double f0_start, f0_end, gain, vibrato_rate, vibrato_depth;
};

std::vector<Note> plan_notes(std::size_t total, double sr, std::mt19937_64& rng) {
  std::vector<Note> notes;
  std::size_t pos = static_cast<std::size_t>(uniform_real(rng, 0.0, 0.1) * sr);
  while (pos < total) {
    Note n;
    n.start = pos;
    n.length = static_cast<std::size_t>(uniform_real(rng, 0.35, 1.1) * sr);
    n.f0_start = 110.0 * std::pow(2.0, uniform_real(rng, 0.0, 1.585));  // 110..330 Hz
    const bool glide = uniform_real(rng, 0.0, 1.0) < 0.25;
    n.f0_end = glide ? n.f0_start * std::pow(2.0, uniform_real(rng, -4.0, 4.0) / 12.0) : n.f0_start;
    n.gain = std::pow(10.0, uniform_real(rng, -18.0, 0.0) / 20.0);
    n.vibrato_rate = uniform_real(rng, 4.0, 6.5);
    n.vibrato_depth = uniform_real(rng, 0.0, 0.012);
    notes.push_back(n);
    pos += n.length + static_cast<std::size_t>(uniform_real(rng, 0.0, 0.15) * sr);
  }
  return notes;
}

double envelope(std::size_t i, std::size_t len, double sr) {
  const double attack = 0.02 * sr, release = 0.06 * sr;
  const double t = static_cast<double>(i), l = static_cast<double>(len);
  double e = 1.0;
  if (t < attack) e = t / attack;
  if (l - t < release) e = std::min(e, (l - t) / release);
  // gentle decay over the sustain
  return e * (0.75 + 0.25 * std::exp(-t / (0.4 * sr)));
}

}  // namespace

std::string synth_class_name(std::size_t label) {
  static const char* names[] = {"mellow_saw", "nasal_square", "breathy_formant"};
  std::string n = names[label % 3];
  if (label >= 3) n += "_v" + std::to_string(label / 3);
  return n;
}

std::vector<double> synth_phrase(std::size_t label, double seconds, std::uint64_t seed,
                                 double sr) {
  if (!(seconds > 0)) throw std::invalid_argument("synth_phrase: seconds must be positive");
  const auto total = static_cast<std::size_t>(std::lround(seconds * sr));
  std::mt19937_64 rng(mix_seed(seed, 0x7068726173, label));
  const auto notes = plan_notes(total, sr, rng);
  const std::size_t recipe = label % 3;
  const double shift = std::pow(1.25, static_cast<double>(label / 3));

  std::vector<double> out(total, 0.0);
  for (const auto& n : notes) {
    Biquad lp1 = Biquad::lowpass(700.0 * shift, 0.7, sr), lp2 = Biquad::lowpass(700.0 * shift, 0.7, sr);
    Biquad res = Biquad::bandpass(2500.0 * shift, 4.0, sr);
    Biquad f1 = Biquad::bandpass(3500.0 * shift, 6.0, sr), f2 = Biquad::bandpass(5500.0 * shift, 6.0, sr),
           f3 = Biquad::bandpass(std::min(7500.0 * shift, 0.45 * sr), 6.0, sr);
    double phase = 0.0;
    const std::size_t end = std::min(total, n.start + n.length);
    for (std::size_t i = n.start; i < end; ++i) {
      const std::size_t k = i - n.start;
      const double frac = static_cast<double>(k) / static_cast<double>(n.length);
      const double f0 = n.f0_start * std::pow(n.f0_end / n.f0_start, frac) *
                        (1.0 + n.vibrato_depth * std::sin(2 * kPi * n.vibrato_rate * k / sr));
      const double dt = f0 / sr;
      double saw = 2.0 * phase - 1.0 - poly_blep(phase, dt);
      double y = 0.0;
      if (recipe == 0) {
        y = 2.0 * lp2(lp1(saw));
      } else if (recipe == 1) {
        double ph2 = phase + 0.5;
        if (ph2 >= 1.0) ph2 -= 1.0;
        const double square = (phase < 0.5 ? 1.0 : -1.0) + poly_blep(phase, dt) - poly_blep(ph2, dt);
        y = 0.35 * square + 1.6 * res(square);
      } else {
        const double excitation = saw + 0.04 * uniform_real(rng, -1.0, 1.0);
        y = 3.0 * (f1(excitation) + 0.8 * f2(excitation) + 0.6 * f3(excitation)) + 0.3 * lp2(lp1(saw));
      }
      out[i] += n.gain * envelope(k, n.length, sr) * y;
      phase += dt;
      if (phase >= 1.0) phase -= 1.0;
    }
  }
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0) {
    for (double& v : out) v *= 0.9 / peak;
  }
  return out;
}

std::vector<LabeledAudio> synth_corpus(const SynthCorpusConfig& config) {
  if (config.classes == 0 || config.files_per_class == 0)
    throw std::invalid_argument("synth_corpus: need at least one class and one file");
  std::vector<LabeledAudio> out;
  const double seconds = config.seconds_per_class / static_cast<double>(config.files_per_class);
  for (std::size_t c = 0; c < config.classes; ++c) {
    for (std::size_t f = 0; f < config.files_per_class; ++f) {
      LabeledAudio a;
      a.label = c;
      a.class_name = synth_class_name(c);
      char suffix[16];
      std::snprintf(suffix, sizeof(suffix), "_%02zu", f);
      a.name = a.class_name + suffix;
      a.samples = synth_phrase(c, seconds, mix_seed(config.seed, f), config.sample_rate);
      out.push_back(std::move(a));
    }
  }
  return out;
}

}  // namespace vqt
