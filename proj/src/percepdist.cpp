// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/percepdist.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "vqtimbre/container.hpp"
#include "vqtimbre/ops.hpp"

namespace vqt {

namespace {

std::string layer_name(std::size_t l, const char* what) {
  return "percep.layer" + std::to_string(l) + "." + what;
}

constexpr double kProbeTolerance = 1e-6;

}  // namespace

std::size_t PercepConfig::channels(std::size_t layer) const {
  std::size_t c = base_channels;
  for (std::size_t i = 0; i < layer && c < max_channels; ++i) c *= 2;
  return std::min(c, max_channels);
}

PercepNet PercepNet::random_init(const PercepConfig& config, std::uint64_t seed) {
  if (config.layers == 0) throw std::invalid_argument("percep net needs at least one layer");
  PercepNet net;
  net.config_ = config;
  std::mt19937_64 rng(mix_seed(seed, 0x9e7c));
  std::size_t c_in = 1;
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::size_t c_out = config.channels(l);
    const double bound = fan_in_bound(c_in * config.kernel);
    net.params_.add(layer_name(l, "weight"), uniform_tensor({c_out, c_in, config.kernel}, bound, rng, false));
    net.params_.add(layer_name(l, "bias"), uniform_tensor({c_out}, bound, rng, false));
    std::vector<double> w(c_out);
    for (auto& v : w) v = uniform_real(rng, 0.0, 1.0);
    net.params_.add(layer_name(l, "channel_weight"), Tensor::from({c_out}, std::move(w)));
    c_in = c_out;
  }
  return net;
}

std::vector<Tensor> PercepNet::features(const Tensor& signal) const {
  std::vector<Tensor> out;
  Tensor h = reshape(signal, {1, signal.numel()});
  for (std::size_t l = 0; l < config_.layers; ++l) {
    h = relu(conv1d(h, params_.get(layer_name(l, "weight")), params_.get(layer_name(l, "bias")),
                    config_.stride, config_.kernel / 2));
    out.push_back(h);
  }
  return out;
}

Tensor PercepNet::distance(const Tensor& x, const Tensor& y) const {
  if (x.numel() != y.numel()) {
    throw DimensionError("deep_feature_distance: length mismatch " + shape_str(x.shape()) +
                         " vs " + shape_str(y.shape()));
  }
  auto fx = features(x);
  auto fy = features(y);
  Tensor total;
  for (std::size_t l = 0; l < fx.size(); ++l) {
    const std::size_t c = fx[l].dim(0), t = fx[l].dim(1);
    auto w = params_.get(layer_name(l, "channel_weight")).data();
    std::vector<double> expanded(c * t);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < t; ++j) expanded[i * t + j] = w[i];
    auto weighted = mul(sub(fx[l], fy[l]), Tensor::from({c, t}, std::move(expanded)));
    auto term = scale(l1_norm(weighted), 1.0 / static_cast<double>(t));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

double PercepNet::distance_value(const std::vector<double>& x, const std::vector<double>& y) const {
  return distance(Tensor::from({x.size()}, x), Tensor::from({y.size()}, y)).item();
}

std::vector<std::pair<std::vector<double>, std::vector<double>>> percep_probe_pairs() {
  constexpr std::size_t n = 4096;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs;
  std::mt19937_64 rng(20240229);
  // tone vs tone + noise, tone vs detuned tone, noise vs scaled noise
  std::vector<double> tone(n), noisy(n), detuned(n), noise(n), quiet(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / 22050.0;
    tone[i] = 0.5 * std::sin(2.0 * std::numbers::pi * 440.0 * t);
    noisy[i] = tone[i] + uniform_real(rng, -0.05, 0.05);
    detuned[i] = 0.5 * std::sin(2.0 * std::numbers::pi * 466.16 * t);
    noise[i] = uniform_real(rng, -0.3, 0.3);
    quiet[i] = 0.5 * noise[i];
  }
  pairs.emplace_back(tone, noisy);
  pairs.emplace_back(tone, detuned);
  pairs.emplace_back(noise, quiet);
  return pairs;
}

std::vector<double> PercepNet::probe_distances() const {
  std::vector<double> out;
  for (const auto& [a, b] : percep_probe_pairs()) out.push_back(distance_value(a, b));
  return out;
}

void PercepNet::save_weights(const std::string& path) const {
  Container c;
  c.metadata["format"] = "vqtimbre-percep";
  c.metadata["percep.layers"] = std::to_string(config_.layers);
  c.metadata["percep.kernel"] = std::to_string(config_.kernel);
  c.metadata["percep.stride"] = std::to_string(config_.stride);
  c.metadata["percep.base_channels"] = std::to_string(config_.base_channels);
  c.metadata["percep.max_channels"] = std::to_string(config_.max_channels);
  auto probes = probe_distances();
  for (std::size_t i = 0; i < probes.size(); ++i) {
    std::ostringstream os;
    os.precision(17);
    os << probes[i];
    c.metadata["probe." + std::to_string(i)] = os.str();
  }
  for (const auto& [name, t] : params_) c.add(name, t);
  c.save(path);
}

PercepNet PercepNet::load_weights(const std::string& path) {
  auto c = Container::load(path);
  if (c.meta_or("format", "") != "vqtimbre-percep") {
    throw ContainerError("percep weights: " + path + " is not a percep weight file");
  }
  PercepNet net;
  net.config_.layers = std::stoul(c.meta("percep.layers"));
  net.config_.kernel = std::stoul(c.meta("percep.kernel"));
  net.config_.stride = std::stoul(c.meta("percep.stride"));
  net.config_.base_channels = std::stoul(c.meta("percep.base_channels"));
  net.config_.max_channels = std::stoul(c.meta("percep.max_channels"));
  for (std::size_t l = 0; l < net.config_.layers; ++l) {
    for (const char* what : {"weight", "bias", "channel_weight"}) {
      const auto& rec = c.at(layer_name(l, what));
      if (std::string(what) == "channel_weight") {
        for (double v : rec.values) {
          if (!(v >= 0.0)) throw ContainerError("percep weights: negative channel weight in " + rec.name);
        }
      }
      net.params_.add(rec.name, Tensor::from(rec.shape, rec.values));
    }
  }
  auto probes = net.probe_distances();
  for (std::size_t i = 0; i < probes.size(); ++i) {
    auto key = "probe." + std::to_string(i);
    if (!c.metadata.count(key)) continue;
    const double stored = std::stod(c.metadata.at(key));
    if (std::fabs(stored - probes[i]) > kProbeTolerance * std::max(1.0, std::fabs(stored))) {
      throw ContainerError("percep weights: probe " + std::to_string(i) + " distance " +
                           std::to_string(probes[i]) + " differs from stored " +
                           std::to_string(stored));
    }
  }
  return net;
}

}  // namespace vqt
