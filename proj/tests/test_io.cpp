#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "segdsl/binary_io.hpp"
#include "segdsl/error.hpp"
#include "segdsl/feature_cache.hpp"
#include "segdsl/random.hpp"
#include "segdsl/wav.hpp"

using namespace segdsl;

namespace {

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

// Minimal RIFF writer for formats the library never writes itself.
std::string wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                      std::uint16_t bits, const std::string& data) {
  std::string fmt;
  put_u16(fmt, format);
  put_u16(fmt, channels);
  put_u32(fmt, rate);
  put_u32(fmt, rate * channels * bits / 8);
  put_u16(fmt, static_cast<std::uint16_t>(channels * bits / 8));
  put_u16(fmt, bits);
  std::string body = "WAVE";
  body += "fmt ";
  put_u32(body, static_cast<std::uint32_t>(fmt.size()));
  body += fmt;
  body += "LIST";
  put_u32(body, 4);
  body += "INFO";
  body += "data";
  put_u32(body, static_cast<std::uint32_t>(data.size()));
  body += data;
  std::string out = "RIFF";
  put_u32(out, static_cast<std::uint32_t>(body.size()));
  return out + body;
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

}  // namespace

TEST_CASE("pcm16 round trip quantizes to 1/32768") {
  TempDir dir("wav");
  dsp::Waveform w;
  w.sample_rate = 16000;
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) w.samples.push_back(rng.uniform(-0.99, 0.99));
  w.samples.push_back(1.7);  // clipped
  wav::write_pcm16(dir / "a.wav", w);
  const dsp::Waveform r = wav::read(dir / "a.wav");
  CHECK(r.sample_rate == 16000);
  REQUIRE(r.samples.size() == w.samples.size());
  for (std::size_t i = 0; i + 1 < w.samples.size(); ++i) CHECK(std::abs(r.samples[i] - w.samples[i]) <= 1.0 / 32768.0);
  CHECK(r.samples.back() == doctest::Approx(32767.0 / 32768.0));
}

TEST_CASE("float32 wav is read exactly and extra chunks are skipped") {
  TempDir dir("wavf");
  std::string data;
  const float vals[3] = {0.25f, -0.5f, 0.125f};
  for (float v : vals) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(data, bits);
  }
  write_file(dir / "f.wav", wav_bytes(3, 1, 22050, 32, data));
  const dsp::Waveform r = wav::read(dir / "f.wav");
  CHECK(r.sample_rate == 22050);
  REQUIRE(r.samples.size() == 3);
  CHECK(r.samples[0] == 0.25);
  CHECK(r.samples[1] == -0.5);
  CHECK(r.samples[2] == 0.125);
}

TEST_CASE("unsupported wav encodings are rejected with the file name") {
  TempDir dir("wavbad");
  std::string data(8, '\0');
  write_file(dir / "stereo.wav", wav_bytes(1, 2, 16000, 16, data));
  CHECK_THROWS_WITH_AS(wav::read(dir / "stereo.wav"), doctest::Contains("stereo.wav"), DataError);
  write_file(dir / "b24.wav", wav_bytes(1, 1, 16000, 24, std::string(9, '\0')));
  CHECK_THROWS_AS(wav::read(dir / "b24.wav"), DataError);
  write_file(dir / "alaw.wav", wav_bytes(6, 1, 8000, 8, data));
  CHECK_THROWS_AS(wav::read(dir / "alaw.wav"), DataError);
  write_file(dir / "junk.wav", "definitely not a wav file");
  CHECK_THROWS_AS(wav::read(dir / "junk.wav"), DataError);
  CHECK_THROWS_AS(wav::read(dir / "missing.wav"), DataError);
}

TEST_CASE("little-endian primitives") {
  std::stringstream ss;
  io::write_u32(ss, 0x01020304u);
  io::write_f64(ss, -2.5);
  io::write_f32(ss, 3.25f);
  io::write_string(ss, "seg");
  const std::string bytes = ss.str();
  CHECK(static_cast<unsigned char>(bytes[0]) == 0x04);
  CHECK(static_cast<unsigned char>(bytes[3]) == 0x01);
  CHECK(io::read_u32(ss) == 0x01020304u);
  CHECK(io::read_f64(ss) == -2.5);
  CHECK(io::read_f32(ss) == 3.25f);
  CHECK(io::read_string(ss) == "seg");
  CHECK_THROWS_AS(io::read_u32(ss), DataError);
}

TEST_CASE("feature cache round trip is bit-identical") {
  Rng rng(12);
  std::vector<dsp::SegmentFeatures> segs;
  for (int u = 0; u < 3; ++u) {
    for (int i = 0; i < 4; ++i) {
      dsp::SegmentFeatures s;
      s.utterance_id = "utt_" + std::to_string(u);
      s.segment_id = dsp::make_segment_id(s.utterance_id, i);
      s.index_in_utterance = i;
      s.start_frame = 3 * i;
      s.n_mels = 5;
      s.seg_len = 7;
      for (int k = 0; k < 35; ++k) s.matrix.push_back(static_cast<float>(rng.normal()));
      s.matrix[0] = -0.0f;
      s.matrix[1] = std::numeric_limits<float>::denorm_min();
      segs.push_back(s);
    }
  }
  std::stringstream ss;
  cache::write_segments(ss, segs, 5, 7);
  const std::string first = ss.str();
  CHECK(first.substr(0, 4) == "SEGF");
  const auto back = cache::read_segments(ss);
  REQUIRE(back.size() == segs.size());
  for (std::size_t i = 0; i < segs.size(); ++i) {
    CHECK(back[i].utterance_id == segs[i].utterance_id);
    CHECK(back[i].segment_id == segs[i].segment_id);
    CHECK(back[i].index_in_utterance == segs[i].index_in_utterance);
    CHECK(back[i].start_frame == segs[i].start_frame);
    CHECK(std::memcmp(back[i].matrix.data(), segs[i].matrix.data(), 35 * sizeof(float)) == 0);
  }
  std::stringstream again;
  cache::write_segments(again, back, 5, 7);
  CHECK(again.str() == first);
}

TEST_CASE("feature cache rejects corrupt input") {
  std::stringstream bad("SEGX\x01\0\0\0");
  CHECK_THROWS_AS(cache::read_segments(bad), DataError);

  std::vector<dsp::SegmentFeatures> segs(1);
  segs[0].utterance_id = "u";
  segs[0].n_mels = 2;
  segs[0].seg_len = 2;
  segs[0].matrix = {1, 2, 3, 4};
  std::stringstream ss;
  cache::write_segments(ss, segs, 2, 2);
  std::string bytes = ss.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(cache::read_segments(truncated), DataError);

  std::string future = bytes;
  future[4] = 9;  // version
  std::stringstream fs(future);
  CHECK_THROWS_AS(cache::read_segments(fs), DataError);

  std::stringstream wrong_shape;
  CHECK_THROWS_AS(cache::write_segments(wrong_shape, segs, 3, 2), SizeError);
}
