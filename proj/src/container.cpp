// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace vqt {

namespace {

constexpr char kMagic[4] = {'V', 'Q', 'T', 'C'};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t limit)
      : bytes_(bytes), limit_(limit) {}
  std::uint8_t u8() { need(1); return bytes_[pos_++]; }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t pos() const { return pos_; }
  [[noreturn]] void fail(const std::string& what) const {
    throw ContainerError("container: " + what + " at byte offset " + std::to_string(pos_));
  }
  void need(std::size_t n) const {
    if (n > limit_ || pos_ > limit_ - n) fail("unexpected end of data");
  }

 private:
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

}  // namespace

void Container::add(std::string name, const Tensor& t, DType dtype) {
  add(std::move(name), t.shape(), std::vector<double>(t.data().begin(), t.data().end()), dtype);
}

void Container::add(std::string name, Shape shape, std::vector<double> values, DType dtype) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("container: tensor " + name + " has " + std::to_string(values.size()) +
                         " values for shape " + shape_str(shape));
  }
  if (find(name)) throw ContainerError("container: duplicate tensor " + name);
  tensors.push_back({std::move(name), std::move(shape), dtype, std::move(values)});
}

const TensorRecord* Container::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const TensorRecord& Container::at(const std::string& name) const {
  if (auto* t = find(name)) return *t;
  throw ContainerError("container: missing tensor " + name);
}

std::string Container::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) throw ContainerError("container: missing metadata key " + key);
  return it->second;
}

std::string Container::meta_or(const std::string& key, const std::string& fallback) const {
  auto it = metadata.find(key);
  return it == metadata.end() ? fallback : it->second;
}

std::vector<std::uint8_t> Container::serialize() const {
  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(metadata.size()));
  for (const auto& [k, v] : metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.str(t.name);
    w.u8(static_cast<std::uint8_t>(t.dtype));
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u64(d);
    if (t.dtype == DType::kF32) {
      for (double v : t.values) w.f32(static_cast<float>(v));
    } else {
      for (double v : t.values) w.f64(v);
    }
  }
  auto& bytes = w.bytes();
  w.u64(fnv1a(bytes.data(), bytes.size()));
  return std::move(bytes);
}

Container Container::deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 + 4 + 8) {
    throw ContainerError("container: truncated header at byte offset 0");
  }
  const std::size_t body = bytes.size() - 8;
  Reader r(bytes, body);
  for (char c : kMagic) {
    if (r.u8() != static_cast<std::uint8_t>(c)) r.fail("bad magic");
  }
  const auto version = r.u32();
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));

  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
  if (stored != fnv1a(bytes.data(), body)) {
    throw ContainerError("container: checksum mismatch at byte offset " + std::to_string(body));
  }

  Container c;
  const auto n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.str();
    c.metadata[k] = r.str();
  }
  const auto n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    TensorRecord t;
    t.name = r.str();
    const auto dtype = r.u8();
    if (dtype > 1) r.fail("unknown dtype " + std::to_string(dtype) + " for tensor " + t.name);
    t.dtype = static_cast<DType>(dtype);
    const auto rank = r.u32();
    if (rank > 8) r.fail("implausible rank " + std::to_string(rank));
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.u64();
      if (dim > (1ULL << 40)) r.fail("implausible dimension");
      t.shape.push_back(static_cast<std::size_t>(dim));
      count *= dim;
    }
    const std::size_t width = t.dtype == DType::kF32 ? 4 : 8;
    if (count > (body - r.pos()) / width) r.fail("tensor " + t.name + " exceeds container size");
    t.values.resize(static_cast<std::size_t>(count));
    for (auto& v : t.values) v = t.dtype == DType::kF32 ? static_cast<double>(r.f32()) : r.f64();
    c.tensors.push_back(std::move(t));
  }
  if (r.pos() != body) r.fail("trailing bytes before checksum");
  return c;
}

void Container::save(const std::string& path) const {
  auto bytes = serialize();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ContainerError("container: cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw ContainerError("container: write failed for " + path);
}

Container Container::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContainerError("container: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace vqt
