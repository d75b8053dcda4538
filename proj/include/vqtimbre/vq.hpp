// SPDX-License-Identifier: Apache-2.0
/**
 * @file   vq.hpp
 * @brief  Discrete latent codebook with straight-through quantization.
 */
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "vqtimbre/tensor.hpp"

namespace vqt {

class Codebook {
 public:
  Codebook() = default;
  /// Rows uniform in [-bound, bound] with bound = init_scale * sqrt(dim) / size.
  Codebook(std::size_t size, std::size_t dim, std::mt19937_64& rng,
           double init_scale = 1.0);
  /// Wraps existing embeddings [K x d_z]; the tensor handle is shared.
  explicit Codebook(Tensor embeddings);

  std::size_t size() const { return embeddings_.dim(0); }
  std::size_t dim() const { return embeddings_.dim(1); }
  const Tensor& embeddings() const { return embeddings_; }
  Tensor& embeddings() { return embeddings_; }
  std::span<const double> row(std::size_t k) const;

  /// argmin_j ||z - q_j||_2, lowest index on ties. Read-only.
  std::size_t nearest(std::span<const double> z) const;

  const std::vector<std::uint64_t>& usage_counts() const { return usage_; }
  std::vector<std::uint64_t>& usage_counts() { return usage_; }
  std::uint64_t total_usage() const;
  std::size_t unused_codes() const;
  void reset_usage();

 private:
  Tensor embeddings_;
  std::vector<std::uint64_t> usage_;
};

struct Quantized {
  Tensor straight_through;  // values of q*, gradient routed to z
  Tensor selected;          // q* rows gathered from the codebook (codebook grad)
  std::vector<std::size_t> indices;
};

/// Quantizes every row of z [T x d_z]. When `count_usage` is set, increments
/// the codebook's usage counters once per row. Throws NumericError naming the
/// first non-finite row.
Quantized quantize(const Tensor& z, Codebook& codebook, bool count_usage = true);
/// Read-only variant for frozen models.
Quantized quantize(const Tensor& z, const Codebook& codebook);

/// Forward value q*, backward copies the incoming gradient to z unchanged.
Tensor straight_through(const Tensor& z, const Tensor& selected);

/// ||sg(z) - q*||^2 averaged over rows: moves only the codebook.
Tensor codebook_loss(const Tensor& z, const Tensor& selected);
/// ||z - sg(q*)||^2 averaged over rows: moves only the encoder.
Tensor commitment_loss(const Tensor& z, const Tensor& selected);

}  // namespace vqt
