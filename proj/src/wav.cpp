#include "segdsl/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "segdsl/error.hpp"

namespace segdsl::wav {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t u16_at(const std::vector<unsigned char>& b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t u32_at(const std::vector<unsigned char>& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const char bytes[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(bytes, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>(v >> 24)};
  out.write(bytes, 4);
}

}  // namespace

dsp::Waveform read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError(name + ": not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(reinterpret_cast<const char*>(bytes.data() + pos), 4);
    const std::uint32_t size = u32_at(bytes, pos + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = std::min<std::size_t>(size, bytes.size() - body);
    if (id == "fmt ") {
      if (available < 16) throw DataError(name + ": truncated fmt chunk");
      format = u16_at(bytes, body);
      channels = u16_at(bytes, body + 2);
      rate = u32_at(bytes, body + 4);
      bits = u16_at(bytes, body + 14);
      if (format == kFormatExtensible) {
        if (available < 26) throw DataError(name + ": truncated WAVE_FORMAT_EXTENSIBLE header");
        format = u16_at(bytes, body + 24);
      }
      have_fmt = true;
    } else if (id == "data") {
      data = bytes.data() + body;
      data_size = available;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt) throw DataError(name + ": missing fmt chunk");
  if (data == nullptr) throw DataError(name + ": missing data chunk");
  if (channels != 1) {
    throw DataError(name + ": expected mono audio, found " + std::to_string(channels) + " channels");
  }
  if (rate == 0) throw DataError(name + ": sample rate is zero");

  dsp::Waveform wave;
  wave.sample_rate = static_cast<int>(rate);
  if (format == kFormatPcm && bits == 16) {
    const std::size_t n = data_size / 2;
    wave.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto raw = static_cast<std::int16_t>(data[2 * i] | (data[2 * i + 1] << 8));
      wave.samples[i] = static_cast<double>(raw) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t n = data_size / 4;
    wave.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t raw = static_cast<std::uint32_t>(data[4 * i]) |
                                (static_cast<std::uint32_t>(data[4 * i + 1]) << 8) |
                                (static_cast<std::uint32_t>(data[4 * i + 2]) << 16) |
                                (static_cast<std::uint32_t>(data[4 * i + 3]) << 24);
      wave.samples[i] = static_cast<double>(std::bit_cast<float>(raw));
    }
  } else {
    throw DataError(name + ": unsupported encoding (format tag " + std::to_string(format) + ", " +
                    std::to_string(bits) + " bits); expected 16-bit PCM or 32-bit float");
  }
  if (wave.samples.empty()) throw DataError(name + ": no samples");
  for (double s : wave.samples) {
    if (!std::isfinite(s)) throw DataError(name + ": non-finite sample");
  }
  return wave;
}

void write_pcm16(const std::filesystem::path& path, const dsp::Waveform& wave) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot create WAV file " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (double s : wave.samples) {
    const double clipped = std::clamp(s, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::clamp(std::lround(clipped * 32768.0), -32768L, 32767L));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  if (!out) throw DataError("failed writing WAV file " + path.string());
}

}  // namespace segdsl::wav
