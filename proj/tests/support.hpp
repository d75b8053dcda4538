// SPDX-License-Identifier: Apache-2.0
// Shared test oracles: finite differences, direct DFT, random tensors.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "vqtimbre/ops.hpp"
#include "vqtimbre/params.hpp"
#include "vqtimbre/tensor.hpp"

namespace vqt::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = uniform_real(rng, lo, hi);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform_real(rng, lo, hi);
  return v;
}

/// Reduce any output to a scalar through a fixed random projection so every
/// output element contributes to the checked gradient.
inline Tensor project(const Tensor& out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return sum(mul(out, random_tensor(out.shape(), rng, -1.0, 1.0, false)));
}

struct GradCheck {
  double max_rel = 0.0;  // worst norm-wise relative error over inputs
  double max_abs = 0.0;
};

/// Central differences with step eps on every element of every input, compared
/// with the reverse-mode gradient. Per input the error is
/// max|analytic - numeric| / max(max|numeric|, 1e-8).
inline GradCheck grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                            std::vector<Tensor> inputs, double eps = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  auto out = f(inputs);
  backward(out);
  GradCheck res;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    std::vector<double> numeric(t.numel());
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double orig = data[i];
      data[i] = orig + eps;
      const double up = f(inputs).item();
      data[i] = orig - eps;
      const double down = f(inputs).item();
      data[i] = orig;
      numeric[i] = (up - down) / (2 * eps);
    }
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      err = std::max(err, std::abs(analytic[i] - numeric[i]));
      scale = std::max(scale, std::abs(numeric[i]));
    }
    res.max_abs = std::max(res.max_abs, err);
    res.max_rel = std::max(res.max_rel, err / std::max(scale, 1e-8));
  }
  return res;
}

/// Windowed DFT of one frame evaluated term by term.
inline std::vector<std::complex<double>> direct_dft(const std::vector<double>& x,
                                                    const std::vector<double>& window) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n);
      acc += x[t] * window[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

inline std::vector<double> sine(std::size_t n, double hz, double amp = 1.0, double sr = 22050.0,
                                double phase = 0.0) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / sr + phase);
  return v;
}

inline double rms(const std::vector<double>& v) {
  double a = 0.0;
  for (double x : v) a += x * x;
  return v.empty() ? 0.0 : std::sqrt(a / static_cast<double>(v.size()));
}

}  // namespace vqt::testing
