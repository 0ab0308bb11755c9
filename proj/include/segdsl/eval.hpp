#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "segdsl/corpus.hpp"
#include "segdsl/dsl.hpp"
#include "segdsl/forest.hpp"

namespace segdsl::eval {

// Fold index per utterance (indexed like the label vector it was built from).
struct FoldAssignment {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> fold_of;

  std::vector<std::size_t> training_items(std::size_t fold) const;
  std::vector<std::size_t> test_items(std::size_t fold) const;
};

// Within each class, items are shuffled by the seed and dealt round-robin;
// each class continues dealing where the previous one stopped so fold sizes
// stay balanced as well. Throws ConfigError for k < 2 and DataError listing
// every class with fewer than k members.
FoldAssignment stratified_folds(std::span<const std::size_t> labels, std::size_t k,
                                std::uint64_t seed);

// Fold assignment over the utterances of a labeled corpus.
FoldAssignment utterance_folds(const SegmentCorpus& corpus, std::size_t k, std::uint64_t seed);

struct OutOfFoldResult {
  // predictions[t][s]: prediction for segment s from the iteration-t network of
  // the run that excluded s's fold.
  std::vector<std::vector<nn::SoftLabel>> predictions;
  std::vector<std::size_t> segment_fold;
  std::vector<dsl::DslRunState> runs;  // one per fold

  const std::vector<nn::SoftLabel>& final_predictions() const { return predictions.back(); }
};

// For each fold f: run_dsl on the other folds, then predict every segment of
// fold f with each iteration's network. Fold f trains with seeds derived
// from (cfg.train.seed, f).
OutOfFoldResult out_of_fold_predictions(const SegmentCorpus& corpus, const FoldAssignment& folds,
                                        const dsl::DslConfig& cfg);

// Number of predicted segments whose utterance appears in the training set
// of the run that produced the prediction. Zero for a leak-free result.
std::size_t count_provenance_leaks(const SegmentCorpus& corpus, const OutOfFoldResult& result);

struct MetricsReport {
  double wa = 0.0;
  double ua = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<double> per_class_recall;
  std::vector<std::size_t> support;
};

// WA = trace / total; UA = mean recall over classes with non-zero support.
// Throws SizeError on a length mismatch and DataError on empty input.
MetricsReport utterance_metrics(std::span<const std::size_t> truth,
                                std::span<const std::size_t> predicted, std::size_t num_classes);

struct ClassAccuracy {
  std::size_t klass = 0;
  std::size_t support = 0;
  std::size_t correct = 0;
  double recall = 0.0;
};

std::vector<ClassAccuracy> per_class_report(const MetricsReport& report);

// Out-of-fold forest predictions over utterance representations with a
// stratified split drawn from seed; fold f's forest uses derive_seed(seed, 400, f)
// in place of cfg.seed.
std::vector<std::size_t> cross_validated_forest(std::span<const std::vector<double>> rows,
                                                std::span<const std::size_t> labels,
                                                std::size_t num_classes, std::size_t folds,
                                                std::uint64_t seed,
                                                const forest::ForestConfig& cfg);

}  // namespace segdsl::eval
