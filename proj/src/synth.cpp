#include "segdsl/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include "segdsl/error.hpp"
#include "segdsl/random.hpp"

namespace segdsl::synth {

std::vector<std::vector<double>> default_signatures(std::size_t num_classes) {
  const std::size_t n = 2 * num_classes;
  const double lo = 300.0;
  const double hi = 3400.0;
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    grid[i] = std::round(lo * std::pow(hi / lo, t));
  }
  std::vector<std::vector<double>> sigs(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) sigs[k] = {grid[k], grid[k + num_classes]};
  return sigs;
}

std::string class_name(std::size_t klass) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "class_%02zu", klass);
  return buf;
}

void SynthSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (utterances_per_class == 0) throw ConfigError("synth: utterances_per_class must be >= 1");
  if (!(utterance_seconds > 0.0)) throw ConfigError("synth: utterance_seconds must be positive");
  if (sample_rate <= 0) throw ConfigError("synth: sample_rate must be positive");
  if (!(contamination_rate >= 0.0 && contamination_rate < 0.5)) {
    throw ConfigError("synth: contamination_rate must lie in [0, 0.5)");
  }
  if (contamination_runs == 0) throw ConfigError("synth: contamination_runs must be >= 1");
  if (!std::isfinite(snr_db)) throw ConfigError("synth: snr_db must be finite");
  if (!(tone_amplitude > 0.0)) throw ConfigError("synth: tone_amplitude must be positive");
  if (distractors_per_slot > 0 && !(distractor_slot_ms > 0.0)) {
    throw ConfigError("synth: distractor_slot_ms must be positive");
  }
  if (signatures.size() != num_classes) {
    throw ConfigError("synth: expected " + std::to_string(num_classes) + " signatures, got " +
                      std::to_string(signatures.size()));
  }
  std::set<double> seen;
  const double nyquist = sample_rate / 2.0;
  for (std::size_t k = 0; k < signatures.size(); ++k) {
    if (signatures[k].empty()) throw ConfigError("synth: class " + std::to_string(k) + " has no tones");
    for (double f : signatures[k]) {
      if (!(f > 0.0 && f < nyquist)) {
        throw ConfigError("synth: tone " + std::to_string(f) + " Hz outside (0, Nyquist)");
      }
      if (!seen.insert(f).second) {
        throw ConfigError("synth: signatures are not disjoint (" + std::to_string(f) + " Hz repeats)");
      }
    }
  }
}

SynthSpec SynthSpec::resolved() const {
  SynthSpec out = *this;
  if (out.signatures.empty() && out.num_classes >= 2) out.signatures = default_signatures(out.num_classes);
  out.validate();
  return out;
}

namespace {

struct Run {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t klass = 0;
};

SynthUtterance make_utterance(const SynthSpec& spec, std::size_t label, std::size_t ordinal,
                              std::size_t global_index, const std::vector<double>& pool) {
  Rng rng(derive_seed(spec.seed, global_index));
  const double sr = spec.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(spec.utterance_seconds * sr));

  // Contamination runs: one per equal section of the timeline, lengths summing
  // to round(rate * n).
  std::vector<Run> runs;
  const auto total = static_cast<std::size_t>(std::llround(spec.contamination_rate * static_cast<double>(n)));
  if (total > 0) {
    const std::size_t r = spec.contamination_runs;
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t len = total / r + (i < total % r ? 1 : 0);
      if (len == 0) continue;
      const std::size_t sec_begin = n * i / r;
      const std::size_t sec_end = n * (i + 1) / r;
      const std::size_t slack = sec_end - sec_begin >= len ? sec_end - sec_begin - len : 0;
      const std::size_t start = sec_begin + rng.index(slack + 1);
      std::size_t other = rng.index(spec.num_classes - 1);
      if (other >= label) ++other;
      runs.push_back({start, std::min(start + len, n), other});
    }
  }

  // Per-tone phases, continuous across contamination boundaries.
  std::vector<std::vector<double>> phase(spec.num_classes);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    for (std::size_t j = 0; j < spec.signatures[k].size(); ++j) {
      phase[k].push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
    }
  }

  double sig_power = 0.0;
  for (std::size_t j = 0; j < spec.signatures[label].size(); ++j) {
    sig_power += spec.tone_amplitude * spec.tone_amplitude / 2.0;
  }
  const double noise_sd = std::sqrt(sig_power / std::pow(10.0, spec.snr_db / 10.0));

  SynthUtterance utt;
  utt.utterance_id = class_name(label) + "_" + std::to_string(1000 + ordinal).substr(1);
  utt.label = label;
  utt.wave.sample_rate = spec.sample_rate;
  utt.wave.samples.assign(n, 0.0);

  std::vector<std::size_t> emitter(n, label);
  for (const Run& run : runs) std::fill(emitter.begin() + run.begin, emitter.begin() + run.end, run.klass);

  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const std::size_t k = emitter[i];
    double v = 0.0;
    for (std::size_t j = 0; j < spec.signatures[k].size(); ++j) {
      v += spec.tone_amplitude * std::sin(two_pi * spec.signatures[k][j] * t + phase[k][j]);
    }
    utt.wave.samples[i] = v;
  }

  if (spec.distractors_per_slot > 0) {
    const std::size_t slot = std::max<std::size_t>(1, samples_for_slot(spec));
    const double amp = spec.tone_amplitude * std::pow(10.0, spec.distractor_db / 20.0);
    for (std::size_t begin = 0; begin < n; begin += slot) {
      const std::size_t end = std::min(n, begin + slot);
      for (std::size_t d = 0; d < spec.distractors_per_slot; ++d) {
        const double f = pool[rng.index(pool.size())];
        const double ph = rng.uniform(0.0, two_pi);
        for (std::size_t i = begin; i < end; ++i) {
          utt.wave.samples[i] += amp * std::sin(two_pi * f * static_cast<double>(i) / sr + ph);
        }
      }
    }
  }

  for (double& s : utt.wave.samples) s += noise_sd * rng.normal();

  // Truth intervals tile [0, n) in sample order.
  std::size_t start = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i == n || emitter[i] != emitter[start]) {
      utt.truth.push_back({static_cast<double>(start) / sr, static_cast<double>(i) / sr, emitter[start]});
      start = i;
    }
  }
  return utt;
}

}  // namespace

std::size_t samples_for_slot(const SynthSpec& spec) {
  return static_cast<std::size_t>(std::llround(spec.distractor_slot_ms * spec.sample_rate / 1000.0));
}

SynthCorpus generate_corpus(const SynthSpec& spec_in) {
  SynthCorpus corpus;
  corpus.spec = spec_in.resolved();
  const SynthSpec& spec = corpus.spec;
  std::vector<double> pool;
  for (const auto& sig : spec.signatures) pool.insert(pool.end(), sig.begin(), sig.end());
  corpus.utterances.reserve(spec.num_classes * spec.utterances_per_class);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    for (std::size_t j = 0; j < spec.utterances_per_class; ++j) {
      corpus.utterances.push_back(make_utterance(spec, k, j, k * spec.utterances_per_class + j, pool));
    }
  }
  return corpus;
}

std::vector<std::size_t> segment_truth(const std::vector<TruthInterval>& truth,
                                       double utterance_seconds, std::size_t utterance_label,
                                       const dsp::FeatureGeometry& geometry,
                                       std::optional<std::size_t> expected_segments) {
  geometry.validate();
  const int sr = geometry.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(utterance_seconds * sr));
  const std::size_t win = dsp::samples_for(geometry.window_ms, sr);
  const std::size_t hop = dsp::samples_for(geometry.hop_ms, sr);
  const std::size_t seg_hop = geometry.seg_hop_frames();
  const std::size_t frames = n >= win ? (n - win) / hop + 1 : 0;
  const std::size_t count = frames >= geometry.seg_len ? (frames - geometry.seg_len) / seg_hop + 1 : 0;
  if (expected_segments && *expected_segments != count) {
    throw ConfigError("segment_truth: geometry yields " + std::to_string(count) +
                      " segments but the corpus has " + std::to_string(*expected_segments));
  }
  if (truth.empty()) throw DataError("segment_truth: empty truth for utterance");

  std::vector<std::size_t> out(count);
  std::vector<double> overlap;
  for (std::size_t s = 0; s < count; ++s) {
    const double a = static_cast<double>(s * seg_hop * hop) / sr;
    const double b = static_cast<double>((s * seg_hop + geometry.seg_len - 1) * hop + win) / sr;
    overlap.assign(std::max(utterance_label + 1, overlap.size()), 0.0);
    for (const TruthInterval& iv : truth) {
      if (iv.klass >= overlap.size()) overlap.resize(iv.klass + 1, 0.0);
      const double o = std::min(b, iv.end_s) - std::max(a, iv.start_s);
      if (o > 0.0) overlap[iv.klass] += o;
    }
    std::size_t best = utterance_label;
    for (std::size_t k = 0; k < overlap.size(); ++k) {
      if (overlap[k] > overlap[best] + 1e-12) best = k;
    }
    out[s] = best;
  }
  return out;
}

std::optional<double> CorrectionStats::correction_rate() const {
  if (corrupted == 0) return std::nullopt;
  return static_cast<double>(corrected) / static_cast<double>(corrupted);
}

std::optional<double> CorrectionStats::damage_rate() const {
  if (clean == 0) return std::nullopt;
  return static_cast<double>(damaged) / static_cast<double>(clean);
}

CorrectionStats correction_rate(const std::vector<std::size_t>& target_argmax,
                                const std::vector<std::size_t>& noisy_labels,
                                const std::vector<std::size_t>& true_classes) {
  if (target_argmax.size() != noisy_labels.size() || target_argmax.size() != true_classes.size()) {
    throw SizeError("correction_rate: snapshot covers " + std::to_string(target_argmax.size()) +
                    " segments, noisy labels " + std::to_string(noisy_labels.size()) + ", truth " +
                    std::to_string(true_classes.size()));
  }
  CorrectionStats st;
  for (std::size_t i = 0; i < target_argmax.size(); ++i) {
    if (true_classes[i] != noisy_labels[i]) {
      ++st.corrupted;
      if (target_argmax[i] == true_classes[i]) ++st.corrected;
    } else {
      ++st.clean;
      if (target_argmax[i] != true_classes[i]) ++st.damaged;
    }
  }
  return st;
}

void write_truth(std::ostream& out, const SynthCorpus& corpus) {
  out << "utterance_id,interval_start_s,interval_end_s,class\n";
  char buf[64];
  for (const SynthUtterance& u : corpus.utterances) {
    for (const TruthInterval& iv : u.truth) {
      out << u.utterance_id << ',';
      std::snprintf(buf, sizeof buf, "%.17g,%.17g", iv.start_s, iv.end_s);
      out << buf << ',' << class_name(iv.klass) << '\n';
    }
  }
}

namespace {

std::size_t parse_class(const std::string& s) {
  std::string digits = s.rfind("class_", 0) == 0 ? s.substr(6) : s;
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec != std::errc() || p != digits.data() + digits.size() || digits.empty()) {
    throw DataError("truth file: unrecognized class '" + s + "'");
  }
  return v;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw DataError("truth file: bad number '" + s + "'");
  }
  if (used != s.size()) throw DataError("truth file: bad number '" + s + "'");
  return v;
}

}  // namespace

std::vector<std::pair<std::string, std::vector<TruthInterval>>> read_truth(std::istream& in) {
  std::vector<std::pair<std::string, std::vector<TruthInterval>>> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      if (line.rfind("utterance_id", 0) == 0) continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (cols.size() != 4) throw DataError("truth file: expected 4 columns in '" + line + "'");
    TruthInterval iv{parse_double(cols[1]), parse_double(cols[2]), parse_class(cols[3])};
    if (out.empty() || out.back().first != cols[0]) out.emplace_back(cols[0], std::vector<TruthInterval>{});
    out.back().second.push_back(iv);
  }
  return out;
}

}  // namespace segdsl::synth
