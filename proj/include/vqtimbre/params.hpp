// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vqtimbre/tensor.hpp"

namespace vqt {

/// Ordered, named collection of trainable leaves. Order is insertion order
/// and is the order used by the optimizer and by checkpoints.
class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor value);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t total_numel() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

/// Uniform in [-bound, bound]; the generator is advanced in element order.
Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng,
                      bool requires_grad = true);

/// Fan-in scaled bound 1/sqrt(fan_in) (the Kaiming-uniform limit for a = sqrt(5)).
double fan_in_bound(std::size_t fan_in);

/// Variance-preserving uniform bound gain * sqrt(3 / fan_in).
double kaiming_bound(std::size_t fan_in, double gain);

/// Gain that keeps activation variance through a leaky relu with this slope.
double leaky_relu_gain(double slope);

/// Deterministic 64-bit mixing of a seed with stream/step identifiers.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// Uniform double in [lo, hi) from raw 64-bit draws; the result does not depend
/// on the standard library's distribution implementation.
double uniform_real(std::mt19937_64& rng, double lo, double hi);

/// Unbiased integer in [0, n).
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);

}  // namespace vqt
