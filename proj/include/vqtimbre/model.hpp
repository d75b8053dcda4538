// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model.hpp
 * @brief  Vector-quantized timbre auto-encoder with a subtractive-noise decoder.
 *
 * Pipeline per waveform:
 *   Hann slicing (L, S) -> per-window stride-2 conv stack -> latent head z_t
 *                                                         -> gain head g_t > 0
 *   z_t -> nearest codebook row q*_t (straight-through)
 *   q*_t -> linear block -> GRU -> linear block -> linear -> sigmoid -> log1p = H_t
 *   X_t = g_t * H_t (.) U_t,  U_t = Fourier frames of uniform noise
 *   w~ = overlap-add of X_t through the inverse basis
 *
 * The baseline variant (quantized = false) feeds z_t straight to the decoder
 * and has neither codebook nor gain head (g_t = 1).
 */
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vqtimbre/adam.hpp"
#include "vqtimbre/filterbank.hpp"
#include "vqtimbre/ops.hpp"
#include "vqtimbre/params.hpp"
#include "vqtimbre/percepdist.hpp"
#include "vqtimbre/spectral.hpp"
#include "vqtimbre/vq.hpp"

namespace vqt {

struct ModelConfig {
  std::size_t window = 2048;        // L
  std::size_t stride = 512;         // S
  std::size_t latent_dim = 128;     // d_z
  std::size_t codebook_size = 1024; // K
  std::size_t enc_layers = 7;
  std::size_t enc_channels_first = 32;
  std::size_t enc_channels_last = 256;
  std::size_t enc_kernel = 13;
  std::size_t dec_hidden = 768;
  std::size_t dec_block_layers = 4;
  std::size_t gain_hidden = 64;
  double leaky_slope = 0.2;
  double lambda_stft = 1.0;     // lambda_0
  double lambda_percep = 0.2;   // lambda_1, effective only with a percep net
  double lambda_latent = 1.0;   // lambda_2
  double beta = 0.25;
  double sample_rate = 22050.0;
  double codebook_init_scale = 1.0;
  /// "uniform": rows in +-scale sqrt(d_z)/K. "data": the trainer overwrites
  /// the rows with encoder outputs drawn from the first training batch.
  std::string codebook_init = "uniform";
  bool tied_bins = false;
  bool quantized = true;
  std::vector<std::size_t> stft_windows{128, 256, 512, 1024, 2048};
  double stft_hop_ratio = 0.25;

  std::size_t bins() const { return window + 2; }  // N
  std::size_t filter_outputs() const { return tied_bins ? window / 2 + 1 : bins(); }
  std::size_t encoder_channels(std::size_t layer) const;
  std::size_t encoder_taps() const;

  /// Desk-scale configuration: L=512, S=128, d_z=16, K=32, channels 8->32.
  static ModelConfig toy();
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  std::map<std::string, std::string> to_entries() const;
  /// Applies one "model.*" style key (without prefix); false if unknown.
  bool set(const std::string& key, const std::string& value);
};

struct EncoderOutput {
  Tensor z;  // [T x d_z]
  Tensor g;  // [T], strictly positive (ones for the baseline)
};

struct ForwardResult {
  Tensor output;  // w~, length (T-1) S + L
  Tensor z;
  Tensor selected;  // q* gathered from the codebook (undefined for baseline)
  Tensor decoder_input;
  Tensor filters;   // H~ [T x N]
  Tensor gains;
  std::vector<std::size_t> indices;
};

struct LossBreakdown {
  Tensor total;
  double stft = 0.0;
  double percep = 0.0;
  double codebook = 0.0;
  double commit = 0.0;
  double total_value() const { return total.item(); }
};

class TimbreModel {
 public:
  TimbreModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  bool quantized() const { return config_.quantized; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const FilterbankBasis& basis() const { return basis_; }
  Codebook& codebook();
  const Codebook& codebook() const;

  void set_percep(std::shared_ptr<const PercepNet> net) { percep_ = std::move(net); }
  const PercepNet* percep() const { return percep_.get(); }

  std::size_t frame_count(std::size_t samples) const { return basis_.frame_count(samples); }

  EncoderOutput encode(const Tensor& waveform) const;
  /// codes [T x d_z] -> H~ [T x N]. `state` carries the recurrent state
  /// across calls; pass nullptr to start from zeros.
  Tensor decode(const Tensor& codes, Tensor* state = nullptr) const;
  /// Uniform noise in [-1, 1] analysed into [T x N] frames.
  ComplexFrames noise_frames(std::size_t samples, std::mt19937_64& rng) const;
  Tensor synthesize(const Tensor& filters, const Tensor& gains,
                    const ComplexFrames& noise) const;

  /// Full pass. `count_usage` updates the codebook usage counters.
  ForwardResult forward(const Tensor& waveform, std::mt19937_64& noise_rng,
                        bool count_usage = false);
  /// Inference pass that leaves every member untouched.
  ForwardResult infer(const Tensor& waveform, std::mt19937_64& noise_rng) const;

  /// lambda_0 * multi-scale STFT + lambda_1 * d + lambda_2 * (L_cb + beta L_commit).
  /// The target is truncated to the output length. Throws NumericError naming a
  /// non-finite component.
  LossBreakdown objective(const Tensor& target, const ForwardResult& fwd) const;

  std::size_t parameter_count() const { return params_.total_numel(); }

 private:
  ForwardResult run(const Tensor& waveform, std::mt19937_64& noise_rng,
                    Codebook* counting) const;
  Tensor linear_block(const Tensor& x, const std::string& prefix) const;

  ModelConfig config_;
  ParameterSet params_;
  FilterbankBasis basis_;
  std::optional<Codebook> codebook_;
  std::shared_ptr<const PercepNet> percep_;
};

// Checkpoints -----------------------------------------------------------------

struct CheckpointExtras {
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  const AdamState* adam = nullptr;  // optional optimizer state
  std::map<std::string, std::string> metadata;
};

/// Parameters (f64), codebook usage, optional Adam moments, config echo.
void save_checkpoint(const std::string& path, const TimbreModel& model,
                     const CheckpointExtras& extras);

struct LoadedCheckpoint {
  std::unique_ptr<TimbreModel> model;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::optional<AdamState> adam;
  std::map<std::string, std::string> metadata;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace vqt
