// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/descriptors.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "vqtimbre/spectral.hpp"

namespace vqt {

namespace {

std::size_t frame_total(std::size_t len, const FrameParams& p) {
  return len < p.frame ? 0 : (len - p.frame) / p.hop + 1;
}

double frame_rms(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

constexpr double kSilenceDb = -60.0;
constexpr double kLoudnessFloorDb = -90.0;

double to_db(double rms) {
  if (rms <= 0.0) return kLoudnessFloorDb;
  return std::max(kLoudnessFloorDb, 20.0 * std::log10(rms));
}

// Returns the refined lag, or 0 when no dip falls below the threshold.
double yin_lag(std::span<const double> x, double threshold) {
  const std::size_t w = x.size() / 2;
  std::vector<double> d(w, 0.0);
  for (std::size_t tau = 1; tau < w; ++tau) {
    double s = 0.0;
    for (std::size_t j = 0; j < w; ++j) {
      const double diff = x[j] - x[j + tau];
      s += diff * diff;
    }
    d[tau] = s;
  }
  // cumulative mean normalized difference
  std::vector<double> cmnd(w, 1.0);
  double running = 0.0;
  for (std::size_t tau = 1; tau < w; ++tau) {
    running += d[tau];
    cmnd[tau] = running > 0 ? d[tau] * static_cast<double>(tau) / running : 1.0;
  }
  std::size_t tau = 2;
  for (; tau < w; ++tau) {
    if (cmnd[tau] < threshold) {
      while (tau + 1 < w && cmnd[tau + 1] < cmnd[tau]) ++tau;
      break;
    }
  }
  if (tau >= w) return 0.0;
  if (tau + 1 < w) {
    const double a = cmnd[tau - 1], b = cmnd[tau], c = cmnd[tau + 1];
    const double denom = a - 2.0 * b + c;
    if (denom > 0) return static_cast<double>(tau) + 0.5 * (a - c) / denom;
  }
  return static_cast<double>(tau);
}

}  // namespace

std::size_t F0Track::voiced_count() const {
  std::size_t n = 0;
  for (bool v : voiced) n += v ? 1 : 0;
  return n;
}

std::vector<double> F0Track::voiced_values() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < hz.size(); ++i)
    if (voiced[i]) out.push_back(hz[i]);
  return out;
}

F0Track f0_track(std::span<const double> signal, const FrameParams& p, double threshold) {
  F0Track out;
  const std::size_t frames = frame_total(signal.size(), p);
  out.hz.assign(frames, 0.0);
  out.voiced.assign(frames, false);
  for (std::size_t t = 0; t < frames; ++t) {
    auto x = signal.subspan(t * p.hop, p.frame);
    if (to_db(frame_rms(x)) < kSilenceDb) continue;
    const double lag = yin_lag(x, threshold);
    if (lag <= 0) continue;
    out.hz[t] = p.sample_rate / lag;
    out.voiced[t] = true;
  }
  return out;
}

std::vector<double> loudness_curve(std::span<const double> signal, const FrameParams& p) {
  const std::size_t frames = frame_total(signal.size(), p);
  std::vector<double> out(frames);
  for (std::size_t t = 0; t < frames; ++t) out[t] = to_db(frame_rms(signal.subspan(t * p.hop, p.frame)));
  return out;
}

namespace {

template <class F>
std::vector<double> per_frame_spectrum(std::span<const double> signal, const FrameParams& p, F f) {
  std::size_t frames = 0;
  auto mag = stft_magnitude(signal, p.frame, p.hop, &frames);
  const std::size_t bins = p.frame / 2 + 1;
  const double df = p.sample_rate / static_cast<double>(p.frame);
  std::vector<double> out(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    out[t] = f(std::span<const double>(mag.data() + t * bins, bins), df);
  }
  return out;
}

double centroid_of(std::span<const double> m, double df) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    num += m[k] * static_cast<double>(k) * df;
    den += m[k];
  }
  return den > 0 ? num / den : 0.0;
}

}  // namespace

std::vector<double> spectral_centroid(std::span<const double> signal, const FrameParams& p) {
  return per_frame_spectrum(signal, p, centroid_of);
}

std::vector<double> spectral_bandwidth(std::span<const double> signal, const FrameParams& p) {
  return per_frame_spectrum(signal, p, [](std::span<const double> m, double df) {
    const double c = centroid_of(m, df);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) {
      const double d = static_cast<double>(k) * df - c;
      num += m[k] * d * d;
      den += m[k];
    }
    return den > 0 ? std::sqrt(num / den) : 0.0;
  });
}

std::string_view descriptor_name(Descriptor d) {
  switch (d) {
    case Descriptor::kCentroid: return "centroid";
    case Descriptor::kBandwidth: return "bandwidth";
    case Descriptor::kF0: return "f0";
    case Descriptor::kLoudness: return "loudness";
  }
  return "unknown";
}

std::optional<Descriptor> parse_descriptor(std::string_view name) {
  for (auto d : {Descriptor::kCentroid, Descriptor::kBandwidth, Descriptor::kF0,
                 Descriptor::kLoudness}) {
    if (descriptor_name(d) == name) return d;
  }
  return std::nullopt;
}

std::vector<double> descriptor_curve(Descriptor d, std::span<const double> signal,
                                     const FrameParams& params) {
  switch (d) {
    case Descriptor::kCentroid: return spectral_centroid(signal, params);
    case Descriptor::kBandwidth: return spectral_bandwidth(signal, params);
    case Descriptor::kLoudness: return loudness_curve(signal, params);
    case Descriptor::kF0: {
      auto track = f0_track(signal, params);
      for (std::size_t i = 0; i < track.hz.size(); ++i)
        if (!track.voiced[i]) track.hz[i] = std::numeric_limits<double>::quiet_NaN();
      return track.hz;
    }
  }
  return {};
}

void write_curve_csv(const std::string& path, std::span<const double> values,
                     const FrameParams& params) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "frame_index,time_s,value\n";
  os.precision(10);
  for (std::size_t i = 0; i < values.size(); ++i) {
    os << i << ',' << static_cast<double>(i * params.hop) / params.sample_rate << ','
       << values[i] << '\n';
  }
}

}  // namespace vqt
