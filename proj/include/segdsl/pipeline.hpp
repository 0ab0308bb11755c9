#pragma once

// Stages shared by the command-line tool and the acceptance runner. Each stage
// reads and writes the documented on-disk artifacts.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "segdsl/aggregate.hpp"
#include "segdsl/corpus.hpp"
#include "segdsl/dsl.hpp"
#include "segdsl/dsp.hpp"
#include "segdsl/eval.hpp"
#include "segdsl/forest.hpp"
#include "segdsl/manifest.hpp"
#include "segdsl/synth.hpp"

namespace segdsl::pipeline {

using json = nlohmann::ordered_json;

json to_json(const dsp::FeatureGeometry& g);
dsp::FeatureGeometry geometry_from_json(const json& j);
json to_json(const synth::SynthSpec& s);
json to_json(const nn::TrainConfig& c);
json to_json(const agg::AggregationConfig& c);
json to_json(const forest::ForestConfig& c);

// synth-gen: WAVs under out_dir/wav, out_dir/manifest.csv, out_dir/truth.csv.
void write_synth_corpus(const synth::SynthCorpus& corpus, const std::filesystem::path& out_dir);

// featurize: reads every manifest row in order. Throws DataError naming the
// file when a WAV cannot be read.
struct FeaturizeResult {
  std::vector<dsp::SegmentFeatures> segments;
  std::vector<std::pair<std::string, std::size_t>> counts;  // segments per utterance
};
FeaturizeResult featurize(const Manifest& manifest, const dsp::FeatureGeometry& geometry);

// Cache file plus "<cache>.json" holding the geometry.
void save_cache(const std::filesystem::path& path, const std::vector<dsp::SegmentFeatures>& segments,
                const dsp::FeatureGeometry& geometry);
std::vector<dsp::SegmentFeatures> load_cache(const std::filesystem::path& path);
std::optional<dsp::FeatureGeometry> load_cache_geometry(const std::filesystem::path& path);

// train: out-of-fold DSL.
struct TrainOptions {
  dsl::DslConfig dsl;
  bool baseline = false;  // --rule none: iterations forced to 0
  std::size_t folds = 10;
  std::uint64_t seed = 0;
};

struct CorrectionRow {
  std::size_t iteration = 0;
  synth::CorrectionStats stats;      // pooled over every fold's training targets
  std::size_t distinct_corrupted = 0;
  std::size_t distinct_segments = 0;
};

struct TrainOutcome {
  SegmentCorpus corpus;
  eval::FoldAssignment folds;
  eval::OutOfFoldResult oof;
  json config;
  std::vector<CorrectionRow> correction;  // empty without ground truth
};

TrainOutcome run_training(SegmentCorpus corpus, const TrainOptions& options, json config = json::object());

using TruthMap = std::map<std::string, std::vector<synth::TruthInterval>>;
TruthMap load_truth(const std::filesystem::path& path);

// Correction and damage rates of the targets each iteration was trained on.
// Iteration 0 targets are the noisy labels.
std::vector<CorrectionRow> correction_by_iteration(const TrainOutcome& outcome, const TruthMap& truth,
                                                   const dsp::FeatureGeometry& geometry);

// Writes config.json, predictions.csv (last iteration), predictions_iter<t>.csv,
// diagnostics.csv, train_log.jsonl, snapshots/ and, when requested, models/.
void write_training_artifacts(const std::filesystem::path& out_dir, const TrainOutcome& outcome,
                              const dsl::LabelUpdateRule& rule, bool save_models);

// Out-of-fold predictions: "# <config json>" line, header
// "segment_id,utterance_id,fold,p0..", rows printed to 17 significant digits.
struct PredictionTable {
  json config = json::object();
  std::size_t num_classes = 0;
  std::vector<std::string> utterance_ids;  // per row
  std::vector<std::size_t> folds;
  std::vector<nn::SoftLabel> predictions;
};

PredictionTable prediction_table(const TrainOutcome& outcome, std::size_t iteration);
void write_predictions(std::ostream& out, const PredictionTable& table, const SegmentCorpus& corpus);
PredictionTable read_predictions(std::istream& in);

// evaluate: aggregation + cross-validated forest.
struct EvaluateOptions {
  agg::AggregationConfig aggregation;
  forest::ForestConfig forest;
  std::size_t folds2 = 10;
  std::uint64_t seed2 = 0;
};

struct EvaluateOutcome {
  std::vector<agg::UtteranceRepresentation> representations;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> predicted;
  eval::MetricsReport report;
  json document;
};

// Utterances are visited in manifest order. Throws DataError when a labeled
// utterance has no predictions.
EvaluateOutcome evaluate(const PredictionTable& table, const Manifest& manifest,
                         const EvaluateOptions& options);

void write_representations(std::ostream& out, const EvaluateOutcome& outcome);
void write_per_class(std::ostream& out, const EvaluateOutcome& outcome,
                     const std::vector<std::string>& class_names);

json correction_json(const std::vector<CorrectionRow>& rows, std::size_t num_classes);

// report: CSV comparison of metrics documents (deltas against the first),
// then correction rows for documents that carry them.
void write_report(std::ostream& out, const std::vector<std::pair<std::string, json>>& documents);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& doc);

}  // namespace segdsl::pipeline
