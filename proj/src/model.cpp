// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/model.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "vqtimbre/container.hpp"

namespace vqt {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw std::invalid_argument("config: " + key + " expects a number, got '" + v + "'");
  }
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw std::invalid_argument("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: " + key + " expects true/false, got '" + v + "'");
}

std::size_t conv_out_len(std::size_t len, std::size_t kernel) {
  return (len + 2 * (kernel / 2) - kernel) / 2 + 1;
}

}  // namespace

std::size_t ModelConfig::encoder_channels(std::size_t layer) const {
  if (enc_layers <= 1) return enc_channels_last;
  const double ratio = static_cast<double>(enc_channels_last) / static_cast<double>(enc_channels_first);
  const double frac = static_cast<double>(layer) / static_cast<double>(enc_layers - 1);
  return static_cast<std::size_t>(std::lround(static_cast<double>(enc_channels_first) * std::pow(ratio, frac)));
}

std::size_t ModelConfig::encoder_taps() const {
  std::size_t len = window;
  for (std::size_t i = 0; i < enc_layers; ++i) len = conv_out_len(len, enc_kernel);
  return len;
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.window = 512;
  c.stride = 128;
  c.latent_dim = 16;
  c.codebook_size = 32;
  c.enc_channels_first = 8;
  c.enc_channels_last = 32;
  c.dec_hidden = 64;
  c.gain_hidden = 64;
  // Loss scales above the model window reward silence between resolved harmonics.
  c.stft_windows = {128, 256, 512};
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (window < 2 || window % 2 != 0) fail("window must be even and >= 2");
  if (stride == 0 || window % stride != 0) fail("stride must divide window");
  if (latent_dim == 0 || codebook_size == 0) fail("latent_dim and codebook_size must be positive");
  if (enc_layers == 0 || enc_kernel == 0 || enc_channels_first == 0 || enc_channels_last == 0)
    fail("encoder dimensions must be positive");
  if (dec_hidden == 0 || dec_block_layers == 0 || gain_hidden == 0) fail("decoder dimensions must be positive");
  if (sample_rate <= 0) fail("sample_rate must be positive");
  if (stft_windows.empty()) fail("stft_windows must not be empty");
  if (!(stft_hop_ratio > 0)) fail("stft_hop_ratio must be positive");
  if (lambda_stft < 0 || lambda_percep < 0 || lambda_latent < 0 || beta < 0) fail("loss weights must be >= 0");
}

std::map<std::string, std::string> ModelConfig::to_entries() const {
  std::map<std::string, std::string> m;
  m["window"] = std::to_string(window);
  m["stride"] = std::to_string(stride);
  m["latent_dim"] = std::to_string(latent_dim);
  m["codebook_size"] = std::to_string(codebook_size);
  m["enc_layers"] = std::to_string(enc_layers);
  m["enc_channels_first"] = std::to_string(enc_channels_first);
  m["enc_channels_last"] = std::to_string(enc_channels_last);
  m["enc_kernel"] = std::to_string(enc_kernel);
  m["dec_hidden"] = std::to_string(dec_hidden);
  m["dec_block_layers"] = std::to_string(dec_block_layers);
  m["gain_hidden"] = std::to_string(gain_hidden);
  m["leaky_slope"] = fmt(leaky_slope);
  m["lambda_stft"] = fmt(lambda_stft);
  m["lambda_percep"] = fmt(lambda_percep);
  m["lambda_latent"] = fmt(lambda_latent);
  m["beta"] = fmt(beta);
  m["sample_rate"] = fmt(sample_rate);
  m["codebook_init_scale"] = fmt(codebook_init_scale);
  m["codebook_init"] = codebook_init;
  m["tied_bins"] = tied_bins ? "true" : "false";
  m["quantized"] = quantized ? "true" : "false";
  std::string ws;
  for (std::size_t i = 0; i < stft_windows.size(); ++i) ws += (i ? "," : "") + std::to_string(stft_windows[i]);
  m["stft_windows"] = ws;
  m["stft_hop_ratio"] = fmt(stft_hop_ratio);
  return m;
}

bool ModelConfig::set(const std::string& key, const std::string& v) {
  if (key == "window") window = parse_size(key, v);
  else if (key == "stride") stride = parse_size(key, v);
  else if (key == "latent_dim") latent_dim = parse_size(key, v);
  else if (key == "codebook_size") codebook_size = parse_size(key, v);
  else if (key == "enc_layers") enc_layers = parse_size(key, v);
  else if (key == "enc_channels_first") enc_channels_first = parse_size(key, v);
  else if (key == "enc_channels_last") enc_channels_last = parse_size(key, v);
  else if (key == "enc_kernel") enc_kernel = parse_size(key, v);
  else if (key == "dec_hidden") dec_hidden = parse_size(key, v);
  else if (key == "dec_block_layers") dec_block_layers = parse_size(key, v);
  else if (key == "gain_hidden") gain_hidden = parse_size(key, v);
  else if (key == "leaky_slope") leaky_slope = parse_double(key, v);
  else if (key == "lambda_stft") lambda_stft = parse_double(key, v);
  else if (key == "lambda_percep") lambda_percep = parse_double(key, v);
  else if (key == "lambda_latent") lambda_latent = parse_double(key, v);
  else if (key == "beta") beta = parse_double(key, v);
  else if (key == "sample_rate") sample_rate = parse_double(key, v);
  else if (key == "codebook_init_scale") codebook_init_scale = parse_double(key, v);
  else if (key == "codebook_init") {
    if (v != "uniform" && v != "data")
      throw std::invalid_argument("config: codebook_init expects uniform or data, got '" + v + "'");
    codebook_init = v;
  }
  else if (key == "tied_bins") tied_bins = parse_bool(key, v);
  else if (key == "quantized") quantized = parse_bool(key, v);
  else if (key == "stft_hop_ratio") stft_hop_ratio = parse_double(key, v);
  else if (key == "stft_windows") {
    stft_windows.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto b = item.find_first_not_of(" \t");
      const auto e = item.find_last_not_of(" \t");
      stft_windows.push_back(parse_size(key, b == std::string::npos ? "" : item.substr(b, e - b + 1)));
    }
  } else {
    return false;
  }
  return true;
}

// Model -----------------------------------------------------------------------

TimbreModel::TimbreModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  basis_ = FilterbankBasis::make(config_.window, config_.stride);
  std::mt19937_64 rng(mix_seed(seed, 0x6d6f64656c));

  // Weights keep activation variance (biases start at zero); with plain
  // 1/sqrt(fan_in) bounds the encoder output is flat across frames at init.
  const double act = leaky_relu_gain(config_.leaky_slope);
  auto add_linear = [&](const std::string& prefix, std::size_t in, std::size_t out, double gain) {
    params_.add(prefix + ".weight", uniform_tensor({out, in}, kaiming_bound(in, gain), rng));
    params_.add(prefix + ".bias", Tensor::zeros({out}, true));
  };

  std::size_t c_in = 1;
  for (std::size_t i = 0; i < config_.enc_layers; ++i) {
    const std::size_t c_out = config_.encoder_channels(i);
    const double b = kaiming_bound(c_in * config_.enc_kernel, act);
    const auto p = "enc.conv" + std::to_string(i);
    params_.add(p + ".weight", uniform_tensor({c_out, c_in, config_.enc_kernel}, b, rng));
    params_.add(p + ".bias", Tensor::zeros({c_out}, true));
    c_in = c_out;
  }
  const std::size_t flat = c_in * config_.encoder_taps();
  add_linear("enc.latent", flat, config_.latent_dim, 1.0);
  if (config_.quantized) {
    add_linear("enc.gain0", flat, config_.gain_hidden, act);
    add_linear("enc.gain1", config_.gain_hidden, 1, 1.0);
    codebook_.emplace(config_.codebook_size, config_.latent_dim, rng, config_.codebook_init_scale);
    params_.add("codebook.embeddings", codebook_->embeddings());
  }

  const std::size_t h = config_.dec_hidden;
  for (std::size_t j = 0; j < config_.dec_block_layers; ++j)
    add_linear("dec.in" + std::to_string(j), j == 0 ? config_.latent_dim : h, h, act);
  const double gb = fan_in_bound(h);
  params_.add("dec.gru.w_ih", uniform_tensor({3 * h, h}, gb, rng));
  params_.add("dec.gru.w_hh", uniform_tensor({3 * h, h}, gb, rng));
  params_.add("dec.gru.b_ih", uniform_tensor({3 * h}, gb, rng));
  params_.add("dec.gru.b_hh", uniform_tensor({3 * h}, gb, rng));
  for (std::size_t j = 0; j < config_.dec_block_layers; ++j)
    add_linear("dec.out" + std::to_string(j), h, h, act);
  add_linear("dec.head", h, config_.filter_outputs(), 1.0);
}

Codebook& TimbreModel::codebook() {
  if (!codebook_) throw std::logic_error("baseline model has no codebook");
  return *codebook_;
}

const Codebook& TimbreModel::codebook() const {
  if (!codebook_) throw std::logic_error("baseline model has no codebook");
  return *codebook_;
}

EncoderOutput TimbreModel::encode(const Tensor& waveform) const {
  if (waveform.numel() < config_.window) {
    throw DimensionError("encode: input of " + std::to_string(waveform.numel()) +
                         " samples is shorter than one window of " + std::to_string(config_.window));
  }
  const auto slope = config_.leaky_slope;
  auto frames = frame_signal(reshape(waveform, {waveform.numel()}), basis_.hann, config_.stride);
  const std::size_t t = frames.dim(0);
  Tensor h = reshape(frames, {t, 1, config_.window});
  for (std::size_t i = 0; i < config_.enc_layers; ++i) {
    const auto p = "enc.conv" + std::to_string(i);
    h = leaky_relu(conv1d(h, params_.get(p + ".weight"), params_.get(p + ".bias"), 2,
                          config_.enc_kernel / 2),
                   slope);
  }
  auto flat = reshape(h, {t, h.numel() / t});
  EncoderOutput out;
  out.z = linear(flat, params_.get("enc.latent.weight"), params_.get("enc.latent.bias"));
  if (config_.quantized) {
    auto hidden = leaky_relu(linear(flat, params_.get("enc.gain0.weight"), params_.get("enc.gain0.bias")), slope);
    auto raw = linear(hidden, params_.get("enc.gain1.weight"), params_.get("enc.gain1.bias"));
    out.g = reshape(softplus(raw), {t});
  } else {
    out.g = Tensor::full({t}, 1.0);
  }
  return out;
}

Tensor TimbreModel::linear_block(const Tensor& x, const std::string& prefix) const {
  Tensor h = x;
  for (std::size_t j = 0; j < config_.dec_block_layers; ++j) {
    const auto p = prefix + std::to_string(j);
    h = leaky_relu(linear(h, params_.get(p + ".weight"), params_.get(p + ".bias")), config_.leaky_slope);
  }
  return h;
}

Tensor TimbreModel::decode(const Tensor& codes, Tensor* state) const {
  if (codes.rank() != 2 || codes.dim(1) != config_.latent_dim) {
    throw DimensionError("decode: codes " + shape_str(codes.shape()) + " vs latent_dim " +
                         std::to_string(config_.latent_dim));
  }
  GruParams gru{params_.get("dec.gru.w_ih"), params_.get("dec.gru.w_hh"),
                params_.get("dec.gru.b_ih"), params_.get("dec.gru.b_hh")};
  Tensor local;
  Tensor& h = state ? *state : local;
  if (!h.defined()) h = Tensor::zeros({config_.dec_hidden});
  auto x = linear_block(codes, "dec.in");
  auto seq = gru_sequence(x, h, gru);
  auto y = linear_block(seq, "dec.out");
  auto coeff = log1p(sigmoid(linear(y, params_.get("dec.head.weight"), params_.get("dec.head.bias"))));
  return config_.tied_bins ? concat_cols(coeff, coeff) : coeff;
}

ComplexFrames TimbreModel::noise_frames(std::size_t samples, std::mt19937_64& rng) const {
  std::vector<double> noise(samples);
  for (auto& v : noise) v = uniform_real(rng, -1.0, 1.0);
  return fourier_frames(Tensor::from({samples}, std::move(noise)), basis_);
}

Tensor TimbreModel::synthesize(const Tensor& filters, const Tensor& gains,
                               const ComplexFrames& noise) const {
  if (filters.rank() != 2 || filters.dim(1) != basis_.bins()) {
    throw DimensionError("synthesize: filters " + shape_str(filters.shape()) + " vs " +
                         std::to_string(basis_.bins()) + " bins");
  }
  if (filters.dim(0) != gains.numel() || filters.dim(0) != noise.frames()) {
    throw DimensionError("synthesize: frame counts differ: filters " + std::to_string(filters.dim(0)) +
                         ", gains " + std::to_string(gains.numel()) + ", noise " +
                         std::to_string(noise.frames()));
  }
  auto shaped = mul(mul_rows(filters, gains), noise.values);
  return overlap_add(shaped, basis_);
}

ForwardResult TimbreModel::run(const Tensor& waveform, std::mt19937_64& noise_rng,
                               Codebook* counting) const {
  ForwardResult r;
  auto enc = encode(waveform);
  r.z = enc.z;
  r.gains = enc.g;
  if (config_.quantized) {
    auto q = counting ? quantize(enc.z, *counting, true) : quantize(enc.z, *codebook_);
    r.selected = q.selected;
    r.decoder_input = q.straight_through;
    r.indices = std::move(q.indices);
  } else {
    r.decoder_input = enc.z;
  }
  r.filters = decode(r.decoder_input);
  auto noise = noise_frames(waveform.numel(), noise_rng);
  r.output = synthesize(r.filters, r.gains, noise);
  return r;
}

ForwardResult TimbreModel::forward(const Tensor& waveform, std::mt19937_64& noise_rng,
                                   bool count_usage) {
  return run(waveform, noise_rng, count_usage && codebook_ ? &*codebook_ : nullptr);
}

ForwardResult TimbreModel::infer(const Tensor& waveform, std::mt19937_64& noise_rng) const {
  return run(waveform, noise_rng, nullptr);
}

LossBreakdown TimbreModel::objective(const Tensor& target, const ForwardResult& fwd) const {
  const std::size_t n = fwd.output.numel();
  if (target.numel() < n) {
    throw DimensionError("objective: target of " + std::to_string(target.numel()) +
                         " samples shorter than output of " + std::to_string(n));
  }
  auto t = target.data();
  auto trimmed = Tensor::from({n}, std::vector<double>(t.begin(), t.begin() + n));

  auto check = [](const char* name, double v) {
    if (!std::isfinite(v)) throw NumericError(std::string("objective: non-finite ") + name + " loss");
  };

  LossBreakdown out;
  MultiScaleStftConfig ms{config_.stft_windows, config_.stft_hop_ratio};
  auto stft = multiscale_stft_loss(trimmed, fwd.output, ms);
  out.stft = stft.item();
  check("stft", out.stft);
  Tensor total = scale(stft, config_.lambda_stft);
  if (percep_ && config_.lambda_percep > 0) {
    auto d = percep_->distance(trimmed, fwd.output);
    out.percep = d.item();
    check("percep", out.percep);
    total = add(total, scale(d, config_.lambda_percep));
  }
  if (config_.quantized && fwd.selected.defined()) {
    auto cb = codebook_loss(fwd.z, fwd.selected);
    auto commit = commitment_loss(fwd.z, fwd.selected);
    out.codebook = cb.item();
    out.commit = commit.item();
    check("codebook", out.codebook);
    check("commit", out.commit);
    total = add(total, scale(add(cb, scale(commit, config_.beta)), config_.lambda_latent));
  }
  out.total = total;
  check("total", total.item());
  return out;
}

// Checkpoints -----------------------------------------------------------------

void save_checkpoint(const std::string& path, const TimbreModel& model,
                     const CheckpointExtras& extras) {
  Container c;
  c.metadata = extras.metadata;
  c.metadata["format"] = "vqtimbre-checkpoint";
  for (const auto& [k, v] : model.config().to_entries()) c.metadata["model." + k] = v;
  c.metadata["seed"] = std::to_string(extras.seed);
  c.metadata["step"] = std::to_string(extras.step);
  for (const auto& [name, t] : model.params()) c.add(name, t);
  if (model.quantized()) {
    const auto& usage = model.codebook().usage_counts();
    c.add("codebook.usage", {usage.size()}, std::vector<double>(usage.begin(), usage.end()));
  }
  if (extras.adam) {
    const auto& a = *extras.adam;
    c.metadata["adam.step"] = std::to_string(a.step);
    c.metadata["adam.lr"] = fmt(a.config.lr);
    c.metadata["adam.beta1"] = fmt(a.config.beta1);
    c.metadata["adam.beta2"] = fmt(a.config.beta2);
    c.metadata["adam.eps"] = fmt(a.config.eps);
    std::size_t i = 0;
    for (const auto& [name, t] : model.params()) {
      if (i < a.m.size()) {
        c.add("adam.m." + name, t.shape(), a.m[i]);
        c.add("adam.v." + name, t.shape(), a.v[i]);
      }
      ++i;
    }
  }
  c.save(path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  auto c = Container::load(path);
  if (c.meta_or("format", "") != "vqtimbre-checkpoint") {
    throw ContainerError("checkpoint: " + path + " is not a model checkpoint");
  }
  ModelConfig cfg;
  for (const auto& [k, v] : c.metadata) {
    if (k.rfind("model.", 0) == 0 && !cfg.set(k.substr(6), v)) {
      throw ContainerError("checkpoint: unknown config key " + k);
    }
  }
  LoadedCheckpoint out;
  out.seed = std::stoull(c.meta("seed"));
  out.step = std::stoll(c.meta("step"));
  out.model = std::make_unique<TimbreModel>(cfg, out.seed);
  for (auto& [name, t] : out.model->params()) {
    const auto& rec = c.at(name);
    if (rec.shape != t.shape()) {
      throw ContainerError("checkpoint: tensor " + name + " has shape " + shape_str(rec.shape) +
                           ", model expects " + shape_str(t.shape()));
    }
    std::copy(rec.values.begin(), rec.values.end(), t.mutable_data().begin());
  }
  if (cfg.quantized) {
    if (const auto* usage = c.find("codebook.usage")) {
      auto& counts = out.model->codebook().usage_counts();
      for (std::size_t k = 0; k < counts.size() && k < usage->values.size(); ++k)
        counts[k] = static_cast<std::uint64_t>(usage->values[k]);
    }
  }
  if (c.metadata.count("adam.step")) {
    AdamState a;
    a.step = std::stoll(c.meta("adam.step"));
    a.config.lr = std::stod(c.meta("adam.lr"));
    a.config.beta1 = std::stod(c.meta("adam.beta1"));
    a.config.beta2 = std::stod(c.meta("adam.beta2"));
    a.config.eps = std::stod(c.meta("adam.eps"));
    for (const auto& [name, t] : out.model->params()) {
      a.m.push_back(c.at("adam.m." + name).values);
      a.v.push_back(c.at("adam.v." + name).values);
    }
    out.adam = std::move(a);
  }
  for (const auto& [k, v] : c.metadata) {
    if (k.rfind("model.", 0) != 0 && k.rfind("adam.", 0) != 0 && k != "format" && k != "seed" && k != "step")
      out.metadata[k] = v;
  }
  return out;
}

}  // namespace vqt
