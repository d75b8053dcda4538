// SPDX-License-Identifier: Apache-2.0
/**
 * @file   ops.hpp
 * @brief  Differentiable operations over vqt::Tensor.
 *
 * Only what the timbre model, its losses and the evaluation classifier need.
 * No broadcasting: binary elementwise ops require identical shapes.
 */
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vqtimbre/tensor.hpp"

namespace vqt {

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor log1p(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);

/// Passes values through; the result never requires grad.
Tensor stop_gradient(const Tensor& a);

// reductions to a single element
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor l1_norm(const Tensor& a);
Tensor l2_norm(const Tensor& a);
Tensor squared_l2(const Tensor& a);

// shape plumbing
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);  // rank 2 only
Tensor row(const Tensor& a, std::size_t index);
Tensor stack_rows(std::span<const Tensor> rows);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// a [R x C] scaled row-wise by s [R].
Tensor mul_rows(const Tensor& a, const Tensor& s);
/// Average over the last axis: [C x T] -> [C], [B x C x T] -> [B x C].
Tensor mean_last_axis(const Tensor& a);

/// x [in] or [R x in], w [out x in], b [out] (may be undefined).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// input [C_in x T] or [B x C_in x T], kernels [C_out x C_in x k],
/// bias [C_out] or undefined. T_out = (T + 2 padding - k) / stride + 1.
Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t padding);
Tensor conv1d(const Tensor& input, const Tensor& kernels, std::size_t stride,
              std::size_t padding = 0);

/// Adjoint of conv1d without padding: input [C_out x T] or [B x C_out x T],
/// same kernel layout [C_out x C_in x k], output [C_in x (T-1) stride + k].
Tensor transposed_conv1d(const Tensor& input, const Tensor& kernels,
                         std::size_t stride);

/// Gate order inside the stacked matrices is reset, update, candidate.
struct GruParams {
  Tensor w_ih;  // [3H x D]
  Tensor w_hh;  // [3H x H]
  Tensor b_ih;  // [3H]
  Tensor b_hh;  // [3H]
  std::size_t hidden() const { return w_hh.dim(1); }
  std::size_t input() const { return w_ih.dim(1); }
};

/// h' = (1 - u) * n + u * h.
Tensor gru_cell(const Tensor& x, const Tensor& h, const GruParams& p);
/// Runs gru_cell over the rows of xs [T x D]; returns [T x H] (or h0 as a
/// [0 x H] tensor plus unchanged state when T = 0). `state` is updated.
Tensor gru_sequence(const Tensor& xs, Tensor& state, const GruParams& p);

/// Overlapping slices of a 1-D signal, each multiplied by `window`:
/// frame t = signal[t*stride : t*stride + L] * window, shape [T x L].
Tensor frame_signal(const Tensor& signal, std::span<const double> window,
                    std::size_t stride);

/// Mean negative log-likelihood of `labels` under row-wise softmax(logits).
Tensor softmax_cross_entropy(const Tensor& logits,
                             std::span<const int> labels);
/// Row-wise softmax values (no graph).
std::vector<double> softmax_rows(const Tensor& logits);

}  // namespace vqt
