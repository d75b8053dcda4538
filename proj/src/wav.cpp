// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "vqtimbre/resample.hpp"

namespace vqt {

namespace {

struct Reader {
  std::span<const std::uint8_t> b;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > b.size()) {
      throw WavError(std::string("truncated file while reading ") + what, pos);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = b[pos] | (b[pos + 1] << 8) | (b[pos + 2] << 16) |
                      (static_cast<std::uint32_t>(b[pos + 3]) << 24);
    pos += 4;
    return v;
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(b[pos] | (b[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::string tag(const char* what) {
    need(4, what);
    std::string s(reinterpret_cast<const char*>(b.data() + pos), 4);
    pos += 4;
    return s;
  }
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

WavError::WavError(const std::string& what, std::size_t offset)
    : std::runtime_error("wav: " + what + " (byte offset " + std::to_string(offset) + ")"),
      detail_(what),
      offset_(offset) {}

std::vector<double> WavAudio::mono() const {
  const std::size_t n = frames();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) acc += interleaved[i * channels + c];
    out[i] = acc / static_cast<double>(channels);
  }
  return out;
}

WavAudio wav_decode(std::span<const std::uint8_t> bytes) {
  static_assert(std::endian::native == std::endian::little, "little-endian host assumed");
  Reader r{bytes};
  if (r.tag("RIFF tag") != "RIFF") throw WavError("missing RIFF tag", 0);
  r.u32("RIFF size");
  if (r.tag("WAVE tag") != "WAVE") throw WavError("missing WAVE tag", 8);

  bool have_fmt = false;
  std::uint16_t fmt_tag = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (true) {
    const std::size_t chunk_at = r.pos;
    if (chunk_at >= bytes.size()) throw WavError("no data chunk", chunk_at);
    auto id = r.tag("chunk id");
    std::uint32_t size = r.u32("chunk size");
    const std::size_t body = r.pos;
    if (id == "fmt ") {
      if (size < 16) throw WavError("fmt chunk shorter than 16 bytes", chunk_at);
      r.need(size, "fmt chunk");
      fmt_tag = r.u16("format tag");
      channels = r.u16("channel count");
      rate = r.u32("sample rate");
      r.u32("byte rate");
      r.u16("block align");
      bits = r.u16("bits per sample");
      if (fmt_tag == 0xFFFE) {  // WAVE_FORMAT_EXTENSIBLE: sub-format GUID starts at +24
        if (size < 40) throw WavError("extensible fmt chunk too short", chunk_at);
        fmt_tag = static_cast<std::uint16_t>(bytes[body + 24] | (bytes[body + 25] << 8));
      }
      if (channels == 0) throw WavError("zero channels", body + 2);
      if (rate == 0) throw WavError("zero sample rate", body + 4);
      if (!((fmt_tag == 1 && bits == 16) || (fmt_tag == 3 && bits == 32))) {
        throw WavError("unsupported encoding (format " + std::to_string(fmt_tag) + ", " +
                           std::to_string(bits) + " bits); need PCM16 or float32",
                       body);
      }
      have_fmt = true;
      r.pos = body + size + (size & 1);
    } else if (id == "data") {
      if (!have_fmt) throw WavError("data chunk before fmt chunk", chunk_at);
      const std::size_t width = bits / 8;
      const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
      if (avail != size) throw WavError("data chunk runs past end of file", body + avail);
      if (size % (width * channels) != 0)
        throw WavError("data size not a multiple of the frame size", chunk_at + 4);
      WavAudio a;
      a.sample_rate = rate;
      a.channels = channels;
      a.format = fmt_tag == 1 ? WavFormat::kPcm16 : WavFormat::kFloat32;
      const std::size_t n = size / width;
      a.interleaved.resize(n);
      const std::uint8_t* p = bytes.data() + body;
      for (std::size_t i = 0; i < n; ++i) {
        if (width == 2) {
          std::int16_t s;
          std::memcpy(&s, p + 2 * i, 2);
          a.interleaved[i] = s / 32768.0;
        } else {
          float f;
          std::memcpy(&f, p + 4 * i, 4);
          a.interleaved[i] = f;
        }
      }
      return a;
    } else {
      if (body + size > bytes.size()) throw WavError("chunk '" + id + "' runs past end of file", chunk_at);
      r.pos = body + size + (size & 1);
    }
  }
}

std::vector<std::uint8_t> wav_encode(std::span<const double> mono, double sample_rate,
                                     WavFormat format) {
  const std::uint16_t width = format == WavFormat::kPcm16 ? 2 : 4;
  const auto data_size = static_cast<std::uint32_t>(mono.size() * width);
  const auto rate = static_cast<std::uint32_t>(std::lround(sample_rate));
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, format == WavFormat::kPcm16 ? 1 : 3);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * width);
  put_u16(out, width);
  put_u16(out, static_cast<std::uint16_t>(width * 8));
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_size);
  for (double v : mono) {
    if (format == WavFormat::kPcm16) {
      double c = std::clamp(v, -1.0, 32767.0 / 32768.0);
      auto s = static_cast<std::int16_t>(std::lround(c * 32768.0));
      put_u16(out, static_cast<std::uint16_t>(s));
    } else {
      float f = static_cast<float>(v);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put_u32(out, u);
    }
  }
  return out;
}

WavAudio wav_read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return wav_decode(bytes);
  } catch (const WavError& e) {
    throw WavError(path + ": " + e.detail(), e.offset());
  }
}

std::vector<double> wav_read(const std::string& path, double target_rate) {
  auto a = wav_read_raw(path);
  auto m = a.mono();
  if (a.sample_rate == target_rate) return m;
  return resample(m, a.sample_rate, target_rate);
}

void wav_write(const std::string& path, std::span<const double> mono, double sample_rate,
               WavFormat format) {
  auto bytes = wav_encode(mono, sample_rate, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("wav: cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("wav: short write to " + path);
}

}  // namespace vqt
