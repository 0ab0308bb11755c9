#pragma once

#include <filesystem>

#include "segdsl/dsp.hpp"

namespace segdsl::wav {

// Reads a little-endian RIFF/WAVE file holding mono 16-bit PCM or mono
// 32-bit IEEE float. Anything else (stereo, 24-bit, A-law, ...) raises a
// DataError that names the file and the offending field.
dsp::Waveform read(const std::filesystem::path& path);

// Writes mono 16-bit PCM. Samples are clipped to [-1, 1] before quantizing.
void write_pcm16(const std::filesystem::path& path, const dsp::Waveform& wave);

}  // namespace segdsl::wav
