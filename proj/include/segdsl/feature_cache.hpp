#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <vector>

#include "segdsl/dsp.hpp"

namespace segdsl::cache {

inline constexpr std::uint32_t kFeatureCacheVersion = 1;

// "SEGF" | version | n_mels | seg_len | count, then per segment:
// utterance-id (u32 length + UTF-8), start_frame (u32), n_mels x seg_len
// float32 row-major. All integers little-endian u32.
void write_segments(std::ostream& out, const std::vector<dsp::SegmentFeatures>& segments,
                    std::uint32_t n_mels, std::uint32_t seg_len);
void save_segments(const std::filesystem::path& path,
                   const std::vector<dsp::SegmentFeatures>& segments, std::uint32_t n_mels,
                   std::uint32_t seg_len);

// Segment ids and per-utterance indices are rebuilt from record order.
std::vector<dsp::SegmentFeatures> read_segments(std::istream& in);
std::vector<dsp::SegmentFeatures> load_segments(const std::filesystem::path& path);

}  // namespace segdsl::cache
