// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace vqt {

FrameParams model_frames(const TimbreModel& model) {
  return {model.config().window, model.config().stride, model.config().sample_rate};
}

TransferResult transfer(const TimbreModel& model, std::span<const double> source,
                        std::uint64_t seed) {
  if (source.size() < model.config().window) {
    throw DimensionError("transfer: source of " + std::to_string(source.size()) +
                         " samples is shorter than one window of " +
                         std::to_string(model.config().window));
  }
  std::mt19937_64 rng(mix_seed(seed, 0, 3));
  auto w = Tensor::from({source.size()}, std::vector<double>(source.begin(), source.end()));
  auto fwd = model.infer(w, rng);
  TransferResult r;
  auto out = fwd.output.data();
  r.output.assign(out.begin(), out.end());
  r.indices = std::move(fwd.indices);
  auto g = fwd.gains.data();
  r.gains.assign(g.begin(), g.end());
  return r;
}

std::size_t DescriptorMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

std::size_t DescriptorMap::nearest(double target) const {
  std::size_t best = values.size();
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!valid[k]) continue;
    const double d = std::abs(values[k] - target);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  if (best == values.size()) throw std::runtime_error("descriptor map has no valid entry");
  return best;
}

void DescriptorMap::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "code_index,descriptor,value,valid\n";
  out.precision(17);
  for (std::size_t k = 0; k < values.size(); ++k) {
    out << k << ',' << descriptor_name(descriptor) << ',';
    if (valid[k]) out << values[k];
    else out << "nan";
    out << ',' << (valid[k] ? 1 : 0) << '\n';
  }
}

DescriptorMap DescriptorMap::read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("code_index,descriptor,value,valid", 0) != 0) {
    throw std::runtime_error(path + ": unexpected header '" + line + "'");
  }
  DescriptorMap m;
  bool first = true;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string idx, name, value, valid;
    std::getline(ss, idx, ',');
    std::getline(ss, name, ',');
    std::getline(ss, value, ',');
    std::getline(ss, valid, ',');
    auto d = parse_descriptor(name);
    if (!d) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown descriptor " + name);
    if (first) m.descriptor = *d;
    first = false;
    if (std::stoul(idx) != m.values.size())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": code indices must be 0..K-1 in order");
    const bool ok = valid == "1";
    m.values.push_back(ok ? std::stod(value) : std::numeric_limits<double>::quiet_NaN());
    m.valid.push_back(ok);
  }
  return m;
}

namespace {

double mean_defined(const std::vector<double>& curve, std::size_t skip, bool* any) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = skip; i < curve.size(); ++i) {
    if (std::isfinite(curve[i])) {
      acc += curve[i];
      ++n;
    }
  }
  *any = n > 0;
  return n ? acc / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

DescriptorMap map_codebook(const TimbreModel& model, Descriptor descriptor,
                           const MapOptions& options) {
  if (!model.quantized()) throw std::invalid_argument("map_codebook: model has no codebook");
  if (options.series_length <= options.skip_frames)
    throw std::invalid_argument("map_codebook: series length must exceed skipped frames");
  const auto& cb = model.codebook();
  const std::size_t m = options.series_length;
  const auto fp = model_frames(model);
  const std::size_t samples = model.basis().output_length(m);

  DescriptorMap map;
  map.descriptor = descriptor;
  map.series_length = m;
  map.skip_frames = options.skip_frames;
  map.values.resize(cb.size());
  map.valid.resize(cb.size());
  for (std::size_t k = 0; k < cb.size(); ++k) {
    auto r = cb.row(k);
    std::vector<double> codes;
    codes.reserve(m * cb.dim());
    for (std::size_t t = 0; t < m; ++t) codes.insert(codes.end(), r.begin(), r.end());
    auto filters = model.decode(Tensor::from({m, cb.dim()}, std::move(codes)));
    std::mt19937_64 rng(mix_seed(options.seed, k, 4));
    auto noise = model.noise_frames(samples, rng);
    auto out = model.synthesize(filters, Tensor::full({m}, 1.0), noise);
    auto curve = descriptor_curve(descriptor, out.data(), fp);
    bool any = false;
    map.values[k] = mean_defined(curve, options.skip_frames, &any);
    map.valid[k] = any;
  }
  return map;
}

TargetSynthesis synth_from_targets(const TimbreModel& model, const DescriptorMap& map,
                                   std::span<const double> targets, std::uint64_t seed) {
  if (!model.quantized()) throw std::invalid_argument("synth_from_targets: model has no codebook");
  if (targets.empty()) throw std::invalid_argument("synth_from_targets: no targets");
  const auto& cb = model.codebook();
  if (map.size() != cb.size()) {
    throw std::invalid_argument("synth_from_targets: map has " + std::to_string(map.size()) +
                                " entries, codebook " + std::to_string(cb.size()));
  }
  if (map.valid_count() == 0) throw std::runtime_error("synth_from_targets: descriptor map has no valid entry");

  TargetSynthesis r;
  const std::size_t m = targets.size();
  std::vector<double> codes;
  codes.reserve(m * cb.dim());
  for (double t : targets) {
    const auto k = map.nearest(t);
    r.indices.push_back(k);
    auto row = cb.row(k);
    codes.insert(codes.end(), row.begin(), row.end());
  }
  auto filters = model.decode(Tensor::from({m, cb.dim()}, std::move(codes)));
  std::mt19937_64 rng(mix_seed(seed, 0, 5));
  auto noise = model.noise_frames(model.basis().output_length(m), rng);
  auto out = model.synthesize(filters, Tensor::full({m}, 1.0), noise);
  r.output.assign(out.data().begin(), out.data().end());
  r.achieved = descriptor_curve(map.descriptor, r.output, model_frames(model));
  return r;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isfinite(a[i]) && std::isfinite(b[i])) {
      x.push_back(a[i]);
      y.push_back(b[i]);
    }
  }
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace vqt
