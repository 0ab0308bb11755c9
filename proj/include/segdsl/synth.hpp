#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "segdsl/dsp.hpp"

namespace segdsl::synth {

// A labeled tone-plus-noise corpus with contiguous contamination runs that
// emit another class's signature, giving exact segment-level ground truth.
struct SynthSpec {
  std::size_t num_classes = 4;
  std::size_t utterances_per_class = 60;
  double utterance_seconds = 1.0;
  int sample_rate = 16000;
  // Tone frequencies per class; empty = default_signatures(num_classes).
  std::vector<std::vector<double>> signatures;
  double contamination_rate = 0.2;  // fraction of each utterance, in [0, 0.5)
  std::size_t contamination_runs = 1;
  double snr_db = 10.0;             // signature power over white-noise power
  double tone_amplitude = 0.12;
  // Class-independent distractor tones: every slot, `distractors_per_slot`
  // tones drawn from the union of all signature frequencies, at
  // `distractor_db` relative to a signature tone.
  std::size_t distractors_per_slot = 0;
  double distractor_db = 0.0;
  double distractor_slot_ms = 100.0;
  std::uint64_t seed = 17;

  // Fills in default signatures and validates. Throws ConfigError.
  SynthSpec resolved() const;
  void validate() const;
};

// Two tones per class, interleaved on a log-spaced 300-3400 Hz grid.
std::vector<std::vector<double>> default_signatures(std::size_t num_classes);

std::string class_name(std::size_t klass);

std::size_t samples_for_slot(const SynthSpec& spec);

struct TruthInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  std::size_t klass = 0;
};

struct SynthUtterance {
  std::string utterance_id;
  std::size_t label = 0;
  dsp::Waveform wave;
  std::vector<TruthInterval> truth;  // tiles [0, duration) in order
};

struct SynthCorpus {
  SynthSpec spec;
  std::vector<SynthUtterance> utterances;
};

// Deterministic per seed; utterance i draws from derive_seed(seed, i).
SynthCorpus generate_corpus(const SynthSpec& spec);

// Ground-truth emitting class per segment: the class covering the majority of
// the segment's sample span; exact ties go to `utterance_label`. Throws
// ConfigError when `expected_segments` disagrees with the geometry.
std::vector<std::size_t> segment_truth(const std::vector<TruthInterval>& truth,
                                       double utterance_seconds, std::size_t utterance_label,
                                       const dsp::FeatureGeometry& geometry,
                                       std::optional<std::size_t> expected_segments = {});

struct CorrectionStats {
  std::size_t corrupted = 0;  // segments whose true class differs from the inherited label
  std::size_t corrected = 0;  // ... whose target argmax equals the true class
  std::size_t clean = 0;
  std::size_t damaged = 0;    // clean segments whose target argmax moved away

  std::optional<double> correction_rate() const;
  std::optional<double> damage_rate() const;
};

// All three vectors are indexed by segment. Throws SizeError on mismatch.
CorrectionStats correction_rate(const std::vector<std::size_t>& target_argmax,
                                const std::vector<std::size_t>& noisy_labels,
                                const std::vector<std::size_t>& true_classes);

// Truth file: "utterance_id,interval_start_s,interval_end_s,class".
void write_truth(std::ostream& out, const SynthCorpus& corpus);
// utterance id -> intervals (class column parsed as class name or index).
std::vector<std::pair<std::string, std::vector<TruthInterval>>> read_truth(std::istream& in);

}  // namespace segdsl::synth
