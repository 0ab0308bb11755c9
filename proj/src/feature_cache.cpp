#include "segdsl/feature_cache.hpp"

#include <fstream>
#include <map>

#include "segdsl/binary_io.hpp"
#include "segdsl/error.hpp"

namespace segdsl::cache {

void write_segments(std::ostream& out, const std::vector<dsp::SegmentFeatures>& segments,
                    std::uint32_t n_mels, std::uint32_t seg_len) {
  io::write_header(out, "SEGF", kFeatureCacheVersion);
  io::write_u32(out, n_mels);
  io::write_u32(out, seg_len);
  io::write_u32(out, static_cast<std::uint32_t>(segments.size()));
  const std::size_t cells = static_cast<std::size_t>(n_mels) * seg_len;
  for (const auto& seg : segments) {
    if (seg.matrix.size() != cells) {
      throw SizeError("segment " + seg.segment_id + " does not match cache geometry");
    }
    io::write_string(out, seg.utterance_id);
    io::write_u32(out, seg.start_frame);
    for (float v : seg.matrix) io::write_f32(out, v);
  }
}

void save_segments(const std::filesystem::path& path,
                   const std::vector<dsp::SegmentFeatures>& segments, std::uint32_t n_mels,
                   std::uint32_t seg_len) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot create feature cache " + path.string());
  write_segments(out, segments, n_mels, seg_len);
  if (!out) throw DataError("failed writing feature cache " + path.string());
}

std::vector<dsp::SegmentFeatures> read_segments(std::istream& in) {
  io::read_header(in, "SEGF", kFeatureCacheVersion);
  const std::uint32_t n_mels = io::read_u32(in);
  const std::uint32_t seg_len = io::read_u32(in);
  const std::uint32_t count = io::read_u32(in);
  const std::size_t cells = static_cast<std::size_t>(n_mels) * seg_len;
  std::map<std::string, std::uint32_t> next_index;
  std::vector<dsp::SegmentFeatures> segments;
  segments.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    dsp::SegmentFeatures seg;
    seg.utterance_id = io::read_string(in);
    seg.start_frame = io::read_u32(in);
    seg.index_in_utterance = next_index[seg.utterance_id]++;
    seg.segment_id = dsp::make_segment_id(seg.utterance_id, seg.index_in_utterance);
    seg.n_mels = n_mels;
    seg.seg_len = seg_len;
    seg.matrix.resize(cells);
    for (auto& v : seg.matrix) v = io::read_f32(in);
    segments.push_back(std::move(seg));
  }
  return segments;
}

std::vector<dsp::SegmentFeatures> load_segments(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature cache " + path.string());
  try {
    return read_segments(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace segdsl::cache
