// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/adam.hpp"

#include <cmath>
#include <string>

namespace vqt {

void AdamState::init(const ParameterSet& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const auto& [name, t] : params) {
    m.emplace_back(t.numel(), 0.0);
    v.emplace_back(t.numel(), 0.0);
  }
}

void adam_step(ParameterSet& params, AdamState& state) {
  if (state.m.size() != params.size()) state.init(params);
  std::size_t idx = 0;
  for (const auto& [name, t] : params) {
    if (state.m[idx].size() != t.numel()) {
      throw DimensionError("adam: moment size mismatch for parameter " + name);
    }
    if (t.has_grad()) {
      for (double g : t.grad()) {
        if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + name);
      }
    }
    ++idx;
  }

  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  idx = 0;
  for (auto& [name, t] : params) {
    auto& m = state.m[idx];
    auto& v = state.v[idx];
    ++idx;
    if (!t.has_grad()) continue;
    auto g = t.grad();
    auto p = t.mutable_data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace vqt
