#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "segdsl/backbone.hpp"
#include "segdsl/corpus.hpp"
#include "segdsl/soft_label.hpp"
#include "segdsl/train.hpp"

namespace segdsl::dsl {

enum class RuleKind { kBdsl, kWdsl, kGsl, kDhl };

std::string to_string(RuleKind kind);
// Accepts bdsl / wdsl / gsl / dhl (case-insensitive). Throws ConfigError.
RuleKind parse_rule_kind(const std::string& name);

// How targets for the next network are built from the previous network's
// predictions. alpha (and an optional non-increasing alpha schedule) only
// exist for WDSL.
struct LabelUpdateRule {
  RuleKind kind = RuleKind::kWdsl;
  std::optional<double> alpha;
  std::vector<double> alpha_schedule;

  static LabelUpdateRule bdsl() { return {RuleKind::kBdsl, std::nullopt, {}}; }
  static LabelUpdateRule wdsl(double alpha) { return {RuleKind::kWdsl, alpha, {}}; }
  static LabelUpdateRule gsl() { return {RuleKind::kGsl, std::nullopt, {}}; }
  static LabelUpdateRule dhl() { return {RuleKind::kDhl, std::nullopt, {}}; }

  void validate() const;
};

// Alpha for relabeling round `round` (0 for the first relabel). Schedules hold
// their final value past the end. Throws ConfigError for non-WDSL rules.
double effective_alpha(const LabelUpdateRule& rule, std::size_t round);

nn::SoftLabel update_bdsl(const nn::SoftLabel& pred);
// (1 - alpha) * pred + alpha * noisy. Throws DomainError for alpha outside [0, 1].
nn::SoftLabel update_wdsl(const nn::SoftLabel& pred, const nn::SoftLabel& noisy, double alpha);
// Componentwise mean over one utterance's predictions. Throws DataError when empty.
nn::SoftLabel update_gsl(std::span<const nn::SoftLabel> utterance_preds);
// One-hot at the argmax, lowest index on ties.
nn::SoftLabel update_dhl(const nn::SoftLabel& pred);

struct SegmentLabelState {
  std::size_t segment = 0;  // index into SegmentCorpus::segments
  nn::SoftLabel noisy;      // inherited one-hot, never modified
  nn::SoftLabel current;
  std::vector<nn::SoftLabel> history;  // target used at each iteration
};

// Every segment of every utterance inherits its utterance's one-hot label.
// Throws DataError on an unlabeled utterance.
std::vector<SegmentLabelState> init_noisy_labels(const SegmentCorpus& corpus);
// Same, restricted to the listed utterances.
std::vector<SegmentLabelState> init_noisy_labels(const SegmentCorpus& corpus,
                                                 std::span<const std::size_t> utterances);

using BackboneFactory = std::function<std::unique_ptr<nn::Backbone>(std::uint64_t seed)>;

// Builds reference networks sized for the corpus geometry.
BackboneFactory reference_cnn_factory(const SegmentCorpus& corpus);

struct DslConfig {
  LabelUpdateRule rule = LabelUpdateRule::wdsl(0.2);
  std::size_t iterations = 1;
  nn::TrainConfig train;
  // Start each network from the previous one instead of a fresh init.
  bool warm_start = false;
  BackboneFactory factory;  // defaults to reference_cnn_factory
};

struct IterationDiagnostics {
  std::size_t iteration = 0;
  double mean_entropy = 0.0;      // of this iteration's network on its training segments
  double flipped_fraction = 0.0;  // targets whose argmax differs from the noisy label
  std::size_t epochs = 0;
};

struct LabelSnapshot {
  std::size_t iteration = 0;
  std::vector<std::size_t> segments;    // corpus segment indices
  std::vector<nn::SoftLabel> targets;   // targets the iteration's network was trained on
};

struct DslRunState {
  std::size_t iteration = 0;  // index of the last trained network
  std::vector<std::size_t> training_utterances;
  std::vector<std::unique_ptr<nn::Backbone>> models;  // theta_0 .. theta_t
  std::vector<LabelSnapshot> snapshots;
  std::vector<IterationDiagnostics> diagnostics;
  std::vector<nn::TrainingLog> logs;
  std::vector<SegmentLabelState> labels;

  const nn::Backbone& final_model() const { return *models.back(); }
};

// Alternating optimization on the listed training utterances. Network 0 is
// trained on the noisy one-hot labels; network t >= 1 on rule(q(theta_{t-1})).
// Segments of other utterances are never read.
DslRunState run_dsl(const SegmentCorpus& corpus, std::span<const std::size_t> training_utterances,
                    const DslConfig& cfg);

// Predictions of a model for the given corpus segments.
std::vector<nn::SoftLabel> predict_segments(const nn::Backbone& model, const SegmentCorpus& corpus,
                                            std::span<const std::size_t> segments);

// Label snapshot text: "# iteration=<t> rule=<r> alpha=<a>", a CSV header
// "segment_id,utterance_id,p0..p{K-1}", then one row per segment with
// probabilities printed to 9 significant digits.
void write_label_snapshot(std::ostream& out, const SegmentCorpus& corpus,
                          const LabelSnapshot& snapshot, const LabelUpdateRule& rule,
                          std::optional<double> alpha);

struct SnapshotRow {
  std::string segment_id;
  std::string utterance_id;
  std::vector<double> probs;
};

struct SnapshotFile {
  std::size_t iteration = 0;
  std::string rule;
  std::string alpha;
  std::vector<SnapshotRow> rows;
};

SnapshotFile read_label_snapshot(std::istream& in);

}  // namespace segdsl::dsl
