#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace segdsl::dsp {

// Guards ln(0) on silent bands.
inline constexpr double kLogFloor = 1e-10;

struct Waveform {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  int sample_rate = 0;

  // Throws DomainError when empty, non-finite or sample_rate <= 0.
  void validate() const;
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

// 1127 * ln(1 + f / 700). Throws DomainError for negative f.
double mel_scale(double hz);
double mel_to_hz(double mel);

// Triangular filters over the one-sided power spectrum, peak-normalized so
// each row reaches exactly 1 at its center bin.
struct MelFilterbank {
  int sample_rate = 0;
  int n_fft = 0;
  int n_mels = 0;
  double f_min = 0.0;
  double f_max = 0.0;
  std::vector<double> center_hz;       // n_mels entries, strictly increasing
  std::vector<std::size_t> peak_bin;   // n_mels entries
  std::vector<double> weights;         // n_mels x num_bins(), row-major

  std::size_t num_bins() const { return static_cast<std::size_t>(n_fft) / 2 + 1; }
  std::span<const double> row(std::size_t m) const {
    return std::span<const double>(weights).subspan(m * num_bins(), num_bins());
  }
};

// n_mels + 2 breakpoints equally spaced on the mel axis between f_min and
// f_max, each snapped to the nearest FFT bin. Throws ConfigError naming the
// filter when two adjacent breakpoints share a bin.
MelFilterbank build_mel_filterbank(int sample_rate, int n_fft, int n_mels, double f_min,
                                   double f_max);

// Samples in a window of the given duration, rounded to the nearest sample.
std::size_t samples_for(double milliseconds, int sample_rate);

// Periodic Hann window: 0.5 - 0.5 cos(2 pi n / N).
std::vector<double> hann_periodic(std::size_t length);

struct Frames {
  std::size_t count = 0;
  std::size_t length = 0;
  std::vector<double> data;  // count x length, already windowed

  std::span<const double> frame(std::size_t i) const {
    return std::span<const double>(data).subspan(i * length, length);
  }
};

// Frame count is floor((N - win) / hop) + 1; a trailing partial frame is
// dropped. Throws TooShortError when the waveform is shorter than one window.
Frames frame_signal(const Waveform& wave, double window_ms, double hop_ms);

// |DFT_b|^2 for b in [0, n_fft/2], zero-padding the frame to n_fft.
// Throws SizeError if the frame is longer than n_fft.
std::vector<double> stft_power(std::span<const double> frame, std::size_t n_fft);

struct LogMel {
  std::size_t n_mels = 0;
  std::size_t n_frames = 0;
  std::vector<double> values;  // n_mels x n_frames, row-major

  double at(std::size_t mel, std::size_t frame) const { return values[mel * n_frames + frame]; }
};

// Entry (m, t) = ln(max(fb_m . power_t, kLogFloor)).
LogMel log_mel_frames(const Waveform& wave, const MelFilterbank& fb, double window_ms,
                      double hop_ms);

struct SegmentFeatures {
  std::string segment_id;
  std::string utterance_id;
  std::uint32_t start_frame = 0;
  std::uint32_t index_in_utterance = 0;
  std::size_t n_mels = 0;
  std::size_t seg_len = 0;
  std::vector<float> matrix;  // n_mels x seg_len, row-major

  std::span<const float> view() const { return matrix; }
};

std::string make_segment_id(const std::string& utterance_id, std::size_t index);

// Segment i covers frames [i * seg_hop, i * seg_hop + seg_len).
std::vector<SegmentFeatures> segment_utterance(const LogMel& logmel, std::size_t seg_len,
                                               std::size_t seg_hop,
                                               const std::string& utterance_id);

// Linear-interpolation resampler. An approximation: no anti-alias filtering.
Waveform resample_linear(const Waveform& wave, int target_rate);

// Full extraction geometry with the defaults used for 16 kHz speech.
struct FeatureGeometry {
  int sample_rate = 16000;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int n_fft = 512;
  int n_mels = 64;
  double f_min = 125.0;
  double f_max = 7500.0;
  std::size_t seg_len = 32;
  double seg_hop_ms = 10.0;

  std::size_t seg_hop_frames() const;
  void validate() const;
};

// Resamples when needed, then log-mel, then segments.
std::vector<SegmentFeatures> extract_segments(const Waveform& wave, const FeatureGeometry& geometry,
                                              const MelFilterbank& fb,
                                              const std::string& utterance_id);

}  // namespace segdsl::dsp
