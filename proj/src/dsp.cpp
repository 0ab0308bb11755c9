#include "segdsl/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "segdsl/error.hpp"

namespace segdsl::dsp {
namespace {

// Real-to-complex FFTW plan with its own buffers, one per transform size.
class R2cPlan {
 public:
  explicit R2cPlan(std::size_t n)
      : n_(n),
        in_(fftw_alloc_real(n)),
        out_(fftw_alloc_complex(n / 2 + 1)),
        plan_(fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE)) {}
  ~R2cPlan() {
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  R2cPlan(const R2cPlan&) = delete;
  R2cPlan& operator=(const R2cPlan&) = delete;

  void power(std::span<const double> frame, std::span<double> out) {
    std::copy(frame.begin(), frame.end(), in_);
    std::fill(in_ + frame.size(), in_ + n_, 0.0);
    fftw_execute(plan_);
    for (std::size_t b = 0; b < out.size(); ++b) out[b] = out_[b][0] * out_[b][0] + out_[b][1] * out_[b][1];
  }

 private:
  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

R2cPlan& plan_for(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<R2cPlan>> plans;
  auto& slot = plans[n];
  if (!slot) {
    // The FFTW planner is not thread-safe.
    static std::mutex planner;
    std::lock_guard lock(planner);
    slot = std::make_unique<R2cPlan>(n);
  }
  return *slot;
}

}  // namespace

void Waveform::validate() const {
  if (sample_rate <= 0) throw DomainError("waveform sample rate must be positive");
  if (samples.empty()) throw DomainError("waveform is empty");
  for (double s : samples) {
    if (!std::isfinite(s)) throw DomainError("waveform contains a non-finite sample");
  }
}

double mel_scale(double hz) {
  if (!(hz >= 0.0)) throw DomainError("mel_scale: frequency must be >= 0");
  return 1127.0 * std::log1p(hz / 700.0);
}

double mel_to_hz(double mel) { return 700.0 * std::expm1(mel / 1127.0); }

MelFilterbank build_mel_filterbank(int sample_rate, int n_fft, int n_mels, double f_min,
                                   double f_max) {
  if (sample_rate <= 0 || n_fft < 2) throw ConfigError("filterbank: bad sample rate or FFT size");
  if (n_mels < 1) throw ConfigError("filterbank: n_mels must be >= 1");
  if (!(f_min >= 0.0) || !(f_min < f_max) || f_max > sample_rate / 2.0) {
    throw ConfigError("filterbank: need 0 <= f_min < f_max <= sample_rate / 2");
  }

  MelFilterbank fb;
  fb.sample_rate = sample_rate;
  fb.n_fft = n_fft;
  fb.n_mels = n_mels;
  fb.f_min = f_min;
  fb.f_max = f_max;

  const std::size_t points = static_cast<std::size_t>(n_mels) + 2;
  const double mel_lo = mel_scale(f_min);
  const double mel_hi = mel_scale(f_max);
  std::vector<double> hz(points);
  std::vector<std::size_t> bin(points);
  const double bin_hz = static_cast<double>(sample_rate) / n_fft;
  for (std::size_t i = 0; i < points; ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (points - 1);
    hz[i] = mel_to_hz(mel);
    bin[i] = static_cast<std::size_t>(std::lround(hz[i] / bin_hz));
  }

  const std::size_t bins = fb.num_bins();
  fb.weights.assign(static_cast<std::size_t>(n_mels) * bins, 0.0);
  for (std::size_t m = 0; m < static_cast<std::size_t>(n_mels); ++m) {
    const std::size_t left = bin[m];
    const std::size_t center = bin[m + 1];
    const std::size_t right = bin[m + 2];
    if (left == center || center == right) {
      throw ConfigError("filterbank: mel filter " + std::to_string(m) +
                        " is empty (adjacent breakpoints share an FFT bin)");
    }
    double* row = fb.weights.data() + m * bins;
    for (std::size_t k = left; k <= center; ++k) {
      row[k] = static_cast<double>(k - left) / static_cast<double>(center - left);
    }
    for (std::size_t k = center; k <= right && k < bins; ++k) {
      row[k] = static_cast<double>(right - k) / static_cast<double>(right - center);
    }
    fb.center_hz.push_back(hz[m + 1]);
    fb.peak_bin.push_back(center);
  }
  return fb;
}

std::size_t samples_for(double milliseconds, int sample_rate) {
  return static_cast<std::size_t>(std::llround(milliseconds * sample_rate / 1000.0));
}

std::vector<double> hann_periodic(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t n = 0; n < length; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                static_cast<double>(length));
  }
  return w;
}

Frames frame_signal(const Waveform& wave, double window_ms, double hop_ms) {
  wave.validate();
  const std::size_t win = samples_for(window_ms, wave.sample_rate);
  const std::size_t hop = samples_for(hop_ms, wave.sample_rate);
  if (win == 0 || hop == 0) throw ConfigError("frame_signal: window and hop must span >= 1 sample");
  if (wave.samples.size() < win) {
    throw TooShortError("waveform shorter than one analysis window", win, wave.samples.size());
  }
  Frames frames;
  frames.length = win;
  frames.count = (wave.samples.size() - win) / hop + 1;
  frames.data.resize(frames.count * win);
  const std::vector<double> window = hann_periodic(win);
  for (std::size_t f = 0; f < frames.count; ++f) {
    const double* src = wave.samples.data() + f * hop;
    double* dst = frames.data.data() + f * win;
    for (std::size_t n = 0; n < win; ++n) dst[n] = src[n] * window[n];
  }
  return frames;
}

std::vector<double> stft_power(std::span<const double> frame, std::size_t n_fft) {
  if (frame.size() > n_fft) {
    throw SizeError("stft_power: frame of " + std::to_string(frame.size()) +
                    " samples exceeds n_fft " + std::to_string(n_fft));
  }
  const std::size_t bins = n_fft / 2 + 1;
  std::vector<double> power(bins);
  plan_for(n_fft).power(frame, power);
  return power;
}

LogMel log_mel_frames(const Waveform& wave, const MelFilterbank& fb, double window_ms,
                      double hop_ms) {
  if (wave.sample_rate != fb.sample_rate) {
    throw ConfigError("log_mel_frames: waveform rate " + std::to_string(wave.sample_rate) +
                      " Hz does not match filterbank rate " + std::to_string(fb.sample_rate) +
                      " Hz");
  }
  const Frames frames = frame_signal(wave, window_ms, hop_ms);
  LogMel out;
  out.n_mels = static_cast<std::size_t>(fb.n_mels);
  out.n_frames = frames.count;
  out.values.resize(out.n_mels * out.n_frames);
  const std::size_t bins = fb.num_bins();
  for (std::size_t t = 0; t < frames.count; ++t) {
    const std::vector<double> power = stft_power(frames.frame(t), static_cast<std::size_t>(fb.n_fft));
    for (std::size_t m = 0; m < out.n_mels; ++m) {
      const double* w = fb.weights.data() + m * bins;
      double energy = 0.0;
      for (std::size_t b = 0; b < bins; ++b) energy += w[b] * power[b];
      out.values[m * out.n_frames + t] = std::log(std::max(energy, kLogFloor));
    }
  }
  return out;
}

std::string make_segment_id(const std::string& utterance_id, std::size_t index) {
  return utterance_id + "#" + std::to_string(index);
}

std::vector<SegmentFeatures> segment_utterance(const LogMel& logmel, std::size_t seg_len,
                                               std::size_t seg_hop,
                                               const std::string& utterance_id) {
  if (seg_len == 0 || seg_hop == 0) throw ConfigError("segment length and hop must be >= 1 frame");
  if (logmel.n_frames < seg_len) {
    throw TooShortError("utterance '" + utterance_id + "' has fewer frames than one segment",
                        seg_len, logmel.n_frames);
  }
  const std::size_t count = (logmel.n_frames - seg_len) / seg_hop + 1;
  std::vector<SegmentFeatures> segments;
  segments.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SegmentFeatures seg;
    seg.segment_id = make_segment_id(utterance_id, i);
    seg.utterance_id = utterance_id;
    seg.start_frame = static_cast<std::uint32_t>(i * seg_hop);
    seg.index_in_utterance = static_cast<std::uint32_t>(i);
    seg.n_mels = logmel.n_mels;
    seg.seg_len = seg_len;
    seg.matrix.resize(logmel.n_mels * seg_len);
    for (std::size_t m = 0; m < logmel.n_mels; ++m) {
      for (std::size_t j = 0; j < seg_len; ++j) {
        seg.matrix[m * seg_len + j] = static_cast<float>(logmel.at(m, seg.start_frame + j));
      }
    }
    segments.push_back(std::move(seg));
  }
  return segments;
}

Waveform resample_linear(const Waveform& wave, int target_rate) {
  if (target_rate <= 0) throw DomainError("resample_linear: target rate must be positive");
  wave.validate();
  if (target_rate == wave.sample_rate) return wave;
  const std::size_t n_in = wave.samples.size();
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_in) * target_rate / wave.sample_rate));
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(std::max<std::size_t>(n_out, 1));
  const double step = static_cast<double>(wave.sample_rate) / target_rate;
  for (std::size_t j = 0; j < out.samples.size(); ++j) {
    const double pos = static_cast<double>(j) * step;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= n_in) {
      out.samples[j] = wave.samples[n_in - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(i);
    out.samples[j] = wave.samples[i] + frac * (wave.samples[i + 1] - wave.samples[i]);
  }
  return out;
}

std::size_t FeatureGeometry::seg_hop_frames() const {
  const auto frames = std::llround(seg_hop_ms / hop_ms);
  if (frames < 1) throw ConfigError("segment hop must be at least one frame hop");
  return static_cast<std::size_t>(frames);
}

void FeatureGeometry::validate() const {
  if (sample_rate <= 0) throw ConfigError("geometry: sample rate must be positive");
  if (!(window_ms > 0.0) || !(hop_ms > 0.0)) throw ConfigError("geometry: window and hop must be > 0");
  if (samples_for(window_ms, sample_rate) > static_cast<std::size_t>(n_fft)) {
    throw ConfigError("geometry: analysis window longer than n_fft");
  }
  if (seg_len == 0) throw ConfigError("geometry: segment length must be >= 1");
  (void)seg_hop_frames();
}

std::vector<SegmentFeatures> extract_segments(const Waveform& wave, const FeatureGeometry& geometry,
                                              const MelFilterbank& fb,
                                              const std::string& utterance_id) {
  if (wave.sample_rate != geometry.sample_rate) {
    return extract_segments(resample_linear(wave, geometry.sample_rate), geometry, fb, utterance_id);
  }
  return segment_utterance(log_mel_frames(wave, fb, geometry.window_ms, geometry.hop_ms),
                           geometry.seg_len, geometry.seg_hop_frames(), utterance_id);
}

}  // namespace segdsl::dsp
