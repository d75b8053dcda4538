// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace vqt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_num(const std::string& key, const std::string& v) {
  T out{};
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config: " + key + ": cannot parse '" + v + "'");
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::size_t TrainConfig::segment_samples(double sample_rate) const {
  return static_cast<std::size_t>(std::lround(segment_seconds * sample_rate));
}

void TrainConfig::validate(std::size_t window, double sample_rate) const {
  if (batch == 0) throw ConfigError("config: batch must be >= 1");
  if (iters < 0) throw ConfigError("config: iters must be >= 0");
  if (!(lr > 0)) throw ConfigError("config: lr must be positive");
  if (segment_samples(sample_rate) < window)
    throw ConfigError("config: segment shorter than one window");
  if (!(split_frac >= 0 && split_frac < 1)) throw ConfigError("config: split_frac must be in [0, 1)");
  if (silence_frame == 0) throw ConfigError("config: silence_frame must be positive");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  try {
    if (model.set(key, value)) return;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (key == "segment_seconds") train.segment_seconds = parse_num<double>(key, value);
  else if (key == "batch") train.batch = parse_num<std::size_t>(key, value);
  else if (key == "iters") train.iters = parse_num<std::int64_t>(key, value);
  else if (key == "lr") train.lr = parse_num<double>(key, value);
  else if (key == "seed") train.seed = parse_num<std::uint64_t>(key, value);
  else if (key == "checkpoint_every") train.checkpoint_every = parse_num<std::int64_t>(key, value);
  else if (key == "silence_db") train.silence_db = parse_num<double>(key, value);
  else if (key == "silence_frame") train.silence_frame = parse_num<std::size_t>(key, value);
  else if (key == "split_frac") train.split_frac = parse_num<double>(key, value);
  else if (key == "data") data = value;
  else if (key == "percep_weights") percep_weights = value;
  else throw ConfigError("config: unknown key '" + key + "'");
}

std::map<std::string, std::string> RunConfig::entries() const {
  auto m = model.to_entries();
  m["segment_seconds"] = fmt(train.segment_seconds);
  m["batch"] = std::to_string(train.batch);
  m["iters"] = std::to_string(train.iters);
  m["lr"] = fmt(train.lr);
  m["seed"] = std::to_string(train.seed);
  m["checkpoint_every"] = std::to_string(train.checkpoint_every);
  m["silence_db"] = fmt(train.silence_db);
  m["silence_frame"] = std::to_string(train.silence_frame);
  m["split_frac"] = fmt(train.split_frac);
  m["data"] = data;
  m["percep_weights"] = percep_weights;
  return m;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  try {
    cfg.model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  cfg.train.validate(cfg.model.window, cfg.model.sample_rate);
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

}  // namespace vqt
