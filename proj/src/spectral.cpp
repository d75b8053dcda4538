// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "vqtimbre/filterbank.hpp"
#include "vqtimbre/ops.hpp"

namespace vqt {

namespace {

std::mutex g_planner_mutex;

// Forward/backward real FFT plans of one size with their own buffers.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    real_ = fftw_alloc_real(n);
    spec_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(g_planner_mutex);
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, spec_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec_, real_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(g_planner_mutex);
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* real() { return real_; }
  fftw_complex* spec() { return spec_; }
  void forward() { fftw_execute(fwd_); }
  // c2r overwrites its input.
  void inverse() { fftw_execute(inv_); }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  double* real_;
  fftw_complex* spec_;
  fftw_plan fwd_;
  fftw_plan inv_;
};

RealFft& fft_for(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<RealFft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

std::size_t stft_frames(std::size_t len, std::size_t n_fft, std::size_t hop) {
  return len < n_fft ? 0 : (len - n_fft) / hop + 1;
}

}  // namespace

std::vector<double> stft_magnitude(std::span<const double> signal,
                                   std::size_t n_fft, std::size_t hop,
                                   std::size_t* frames_out) {
  if (hop == 0 || n_fft < 2) throw std::invalid_argument("stft: bad n_fft/hop");
  const std::size_t frames = stft_frames(signal.size(), n_fft, hop);
  const std::size_t bins = n_fft / 2 + 1;
  const auto win = hann_window(n_fft);
  auto& fft = fft_for(n_fft);
  std::vector<double> mag(frames * bins);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < n_fft; ++i) fft.real()[i] = signal[t * hop + i] * win[i];
    fft.forward();
    for (std::size_t k = 0; k < bins; ++k) {
      mag[t * bins + k] = std::hypot(fft.spec()[k][0], fft.spec()[k][1]);
    }
  }
  if (frames_out) *frames_out = frames;
  return mag;
}

Tensor stft_magnitude(const Tensor& signal, std::size_t n_fft, std::size_t hop) {
  if (hop == 0 || n_fft < 2) throw std::invalid_argument("stft: bad n_fft/hop");
  const std::size_t len = signal.numel();
  const std::size_t frames = stft_frames(len, n_fft, hop);
  if (frames == 0) {
    throw DimensionError("stft_magnitude: signal of " + std::to_string(len) +
                         " samples shorter than window " + std::to_string(n_fft));
  }
  const std::size_t bins = n_fft / 2 + 1;
  auto win = hann_window(n_fft);
  auto& fft = fft_for(n_fft);
  std::vector<double> mag(frames * bins);
  // Unit phase factors X/|X| are kept for the backward pass.
  std::vector<double> phase_re(frames * bins), phase_im(frames * bins);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < n_fft; ++i) fft.real()[i] = signal[t * hop + i] * win[i];
    fft.forward();
    for (std::size_t k = 0; k < bins; ++k) {
      const double re = fft.spec()[k][0], im = fft.spec()[k][1];
      const double m = std::hypot(re, im);
      mag[t * bins + k] = m;
      phase_re[t * bins + k] = m > 0 ? re / m : 0.0;
      phase_im[t * bins + k] = m > 0 ? im / m : 0.0;
    }
  }
  return detail::make_result(
      "stft_magnitude", {frames, bins}, std::move(mag), {signal},
      [n_fft, hop, frames, bins, win = std::move(win), phase_re = std::move(phase_re),
       phase_im = std::move(phase_im)](detail::Node& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        auto& g = in.ensure_grad();
        auto& fft = fft_for(n_fft);
        // Adjoint of the half-spectrum DFT: x_j = Re sum_k G_k e^{+2 pi i jk/n};
        // c2r doubles interior bins, so those are pre-halved.
        for (std::size_t t = 0; t < frames; ++t) {
          for (std::size_t k = 0; k < bins; ++k) {
            const double gm = self.grad[t * bins + k];
            const double w = (k == 0 || k == bins - 1) ? 1.0 : 0.5;
            fft.spec()[k][0] = w * gm * phase_re[t * bins + k];
            fft.spec()[k][1] = w * gm * phase_im[t * bins + k];
          }
          fft.inverse();
          for (std::size_t i = 0; i < n_fft; ++i) g[t * hop + i] += fft.real()[i] * win[i];
        }
      });
}

Tensor multiscale_stft_loss(const Tensor& target, const Tensor& estimate,
                            const MultiScaleStftConfig& config) {
  if (target.numel() != estimate.numel()) {
    throw DimensionError("multiscale_stft_loss: length mismatch " +
                         shape_str(target.shape()) + " vs " + shape_str(estimate.shape()));
  }
  Tensor total;
  for (std::size_t n : config.windows) {
    if (n > target.numel()) continue;
    const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                  std::lround(config.hop_ratio * n)));
    auto a = stft_magnitude(target, n, hop);
    auto b = stft_magnitude(estimate, n, hop);
    auto term = mean(abs(sub(a, b)));
    total = total.defined() ? add(total, term) : term;
  }
  if (!total.defined()) {
    throw DimensionError("multiscale_stft_loss: signal of " +
                         std::to_string(target.numel()) +
                         " samples is shorter than every analysis window");
  }
  return total;
}

double lsd(std::span<const double> a, std::span<const double> b, const LsdConfig& config) {
  if (a.size() != b.size()) {
    throw DimensionError("lsd: length mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  std::size_t frames = 0;
  auto ma = stft_magnitude(a, config.window, config.hop, &frames);
  auto mb = stft_magnitude(b, config.window, config.hop);
  if (frames == 0) {
    throw DimensionError("lsd: signal of " + std::to_string(a.size()) +
                         " samples shorter than window " + std::to_string(config.window));
  }
  const std::size_t bins = config.window / 2 + 1;
  double total = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double d = std::log10(std::max(ma[t * bins + k], config.floor)) -
                       std::log10(std::max(mb[t * bins + k], config.floor));
      acc += d * d;
    }
    total += std::sqrt(acc);
  }
  return total / static_cast<double>(frames);
}

}  // namespace vqt
