// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vqtimbre/dtw.hpp"
#include "vqtimbre/spectral.hpp"
#include "vqtimbre/transfer.hpp"

namespace vqt {

TransferFn model_transfer_fn(const TimbreModel& model, std::uint64_t seed) {
  return [&model, seed](std::span<const double> x) { return transfer(model, x, seed).output; };
}

EvalRow EvalReport::average() const {
  EvalRow a;
  a.domain = "average";
  if (rows.empty()) return a;
  // NaN cells (e.g. no voiced frames for f0 DTW) are left out of their column's mean.
  auto column = [this](double EvalRow::*field) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (std::isnan(r.*field)) continue;
      sum += r.*field;
      ++n;
    }
    return n ? sum / static_cast<double>(n) : std::nan("");
  };
  a.accuracy = column(&EvalRow::accuracy);
  a.dtw_f0 = column(&EvalRow::dtw_f0);
  a.dtw_loudness = column(&EvalRow::dtw_loudness);
  a.lsd = column(&EvalRow::lsd);
  for (const auto& r : rows) a.frames += r.frames;
  return a;
}

std::string EvalReport::to_csv() const {
  std::string out = "# model=" + model + "\ndomain,accuracy,dtw_f0,dtw_loudness,lsd,frames\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g,%.17g,%zu\n", r.accuracy, r.dtw_f0,
                  r.dtw_loudness, r.lsd, r.frames);
    out += r.domain + buf;
  }
  return out;
}

EvalReport EvalReport::from_csv(const std::string& text) {
  EvalReport rep;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# model=", 0) == 0) {
      rep.model = line.substr(8);
      continue;
    }
    if (!header) {
      if (line != "domain,accuracy,dtw_f0,dtw_loudness,lsd,frames")
        throw std::runtime_error("eval report: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    std::stringstream ss(line);
    EvalRow r;
    std::string cell;
    std::getline(ss, r.domain, ',');
    std::getline(ss, cell, ',');
    r.accuracy = std::stod(cell);
    std::getline(ss, cell, ',');
    r.dtw_f0 = std::stod(cell);
    std::getline(ss, cell, ',');
    r.dtw_loudness = std::stod(cell);
    std::getline(ss, cell, ',');
    r.lsd = std::stod(cell);
    std::getline(ss, cell, ',');
    r.frames = std::stoul(cell);
    rep.rows.push_back(r);
  }
  return rep;
}

void EvalReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_csv();
}

EvalReport EvalReport::read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_csv(ss.str());
}

EvalRow evaluate_domain(const TransferFn& fn, const DomainData& domain,
                        const FrameClassifier& classifier, const FrameParams& frames) {
  EvalRow row;
  row.domain = domain.name;
  std::size_t hits = 0, f0_pairs = 0, loud_pairs = 0;
  for (const auto& src : domain.sources) {
    const auto out = fn(src);
    for (auto p : classifier.predict(out)) {
      ++row.frames;
      if (p == domain.target_class) ++hits;
    }
    std::span<const double> src_view(src.data(), std::min(src.size(), out.size()));
    const auto f0_src = f0_track(src_view, frames).voiced_values();
    const auto f0_out = f0_track(out, frames).voiced_values();
    if (!f0_src.empty() && !f0_out.empty()) {
      row.dtw_f0 += dtw(f0_src, f0_out).distance;
      ++f0_pairs;
    }
    const auto l_src = loudness_curve(src_view, frames);
    const auto l_out = loudness_curve(out, frames);
    if (!l_src.empty() && !l_out.empty()) {
      row.dtw_loudness += dtw(l_src, l_out).distance;
      ++loud_pairs;
    }
  }
  row.accuracy = row.frames ? static_cast<double>(hits) / static_cast<double>(row.frames) : 0.0;
  row.dtw_f0 = f0_pairs ? row.dtw_f0 / static_cast<double>(f0_pairs) : std::nan("");
  row.dtw_loudness = loud_pairs ? row.dtw_loudness / static_cast<double>(loud_pairs) : std::nan("");

  std::size_t n = 0;
  for (const auto& x : domain.target_test) {
    const auto out = fn(x);
    const std::size_t len = std::min(out.size(), x.size());
    if (len < LsdConfig{}.window) continue;
    row.lsd += lsd(std::span<const double>(x.data(), len), std::span<const double>(out.data(), len));
    ++n;
  }
  row.lsd = n ? row.lsd / static_cast<double>(n) : std::nan("");
  return row;
}

std::string format_table(const EvalReport& baseline, const EvalReport& vq) {
  if (baseline.rows.size() != vq.rows.size()) throw std::invalid_argument("format_table: row count mismatch");
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%-18s| %-21s| %-21s| %-21s| %-21s\n", "scores",
                "classification acc.", "DTW f0", "DTW loudness", "LSD");
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-18s| %-10s %-10s| %-10s %-10s| %-10s %-10s| %-10s %-10s\n",
                "targets | models", "baseline", "VQ-VAE", "baseline", "VQ-VAE", "baseline", "VQ-VAE",
                "baseline", "VQ-VAE");
  out += buf;
  out += std::string(106, '-') + "\n";
  auto line = [&](const EvalRow& b, const EvalRow& v) {
    std::snprintf(buf, sizeof(buf),
                  "%-18s| %-10.4f %-10.4f| %-10.3e %-10.3e| %-10.3e %-10.3e| %-10.4f %-10.4f\n",
                  b.domain.c_str(), b.accuracy, v.accuracy, b.dtw_f0, v.dtw_f0, b.dtw_loudness,
                  v.dtw_loudness, b.lsd, v.lsd);
    out += buf;
  };
  for (std::size_t i = 0; i < baseline.rows.size(); ++i) line(baseline.rows[i], vq.rows[i]);
  out += std::string(106, '-') + "\n";
  line(baseline.average(), vq.average());
  return out;
}

}  // namespace vqt
