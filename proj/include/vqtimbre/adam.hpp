// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "vqtimbre/params.hpp"

namespace vqt {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moments per parameter, in ParameterSet order.
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  void init(const ParameterSet& params);
};

/// One bias-corrected Adam update over every parameter that has a gradient.
/// Throws NumericError naming the parameter when a gradient is not finite;
/// in that case no parameter is modified.
void adam_step(ParameterSet& params, AdamState& state);

}  // namespace vqt
