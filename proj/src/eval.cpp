#include "segdsl/eval.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "segdsl/error.hpp"
#include "segdsl/random.hpp"

namespace segdsl::eval {

std::vector<std::size_t> FoldAssignment::training_items(std::size_t fold) const {
  std::vector<std::size_t> items;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) items.push_back(i);
  }
  return items;
}

std::vector<std::size_t> FoldAssignment::test_items(std::size_t fold) const {
  std::vector<std::size_t> items;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) items.push_back(i);
  }
  return items;
}

FoldAssignment stratified_folds(std::span<const std::size_t> labels, std::size_t k,
                                std::uint64_t seed) {
  if (k < 2) throw ConfigError("stratified folds need k >= 2");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::string deficient;
  for (const auto& [klass, members] : by_class) {
    if (members.size() < k) {
      deficient += (deficient.empty() ? "" : ", ") + std::to_string(klass) + " (" +
                   std::to_string(members.size()) + ")";
    }
  }
  if (!deficient.empty()) {
    throw DataError("classes with fewer than " + std::to_string(k) + " members: " + deficient);
  }

  FoldAssignment folds;
  folds.k = k;
  folds.seed = seed;
  folds.fold_of.assign(labels.size(), 0);
  std::size_t next = 0;
  for (auto& [klass, members] : by_class) {
    Rng rng(derive_seed(seed, klass));
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t item : members) {
      folds.fold_of[item] = next;
      next = (next + 1) % k;
    }
  }
  return folds;
}

FoldAssignment utterance_folds(const SegmentCorpus& corpus, std::size_t k, std::uint64_t seed) {
  corpus.require_labels();
  std::vector<std::size_t> labels;
  labels.reserve(corpus.utterances.size());
  for (const auto& u : corpus.utterances) labels.push_back(*u.label);
  return stratified_folds(labels, k, seed);
}

OutOfFoldResult out_of_fold_predictions(const SegmentCorpus& corpus, const FoldAssignment& folds,
                                        const dsl::DslConfig& cfg) {
  if (folds.fold_of.size() != corpus.utterances.size()) {
    throw SizeError("fold assignment does not cover the corpus utterances");
  }
  OutOfFoldResult result;
  const std::size_t n_models = cfg.iterations + 1;
  result.predictions.assign(n_models, std::vector<nn::SoftLabel>(corpus.segments.size()));
  result.segment_fold.assign(corpus.segments.size(), 0);

  for (std::size_t f = 0; f < folds.k; ++f) {
    dsl::DslConfig fold_cfg = cfg;
    fold_cfg.train.seed = derive_seed(cfg.train.seed, 300, f);
    const auto train_utts = folds.training_items(f);
    dsl::DslRunState run = dsl::run_dsl(corpus, train_utts, fold_cfg);

    std::vector<std::size_t> test_segments;
    for (std::size_t u : folds.test_items(f)) {
      const auto& segs = corpus.utterances[u].segments;
      test_segments.insert(test_segments.end(), segs.begin(), segs.end());
    }
    for (std::size_t t = 0; t < n_models; ++t) {
      auto preds = dsl::predict_segments(*run.models[t], corpus, test_segments);
      for (std::size_t i = 0; i < test_segments.size(); ++i) {
        result.predictions[t][test_segments[i]] = std::move(preds[i]);
      }
    }
    for (std::size_t s : test_segments) result.segment_fold[s] = f;
    result.runs.push_back(std::move(run));
  }
  return result;
}

std::size_t count_provenance_leaks(const SegmentCorpus& corpus, const OutOfFoldResult& result) {
  std::size_t leaks = 0;
  std::vector<std::set<std::size_t>> seen(result.runs.size());
  for (std::size_t f = 0; f < result.runs.size(); ++f) {
    seen[f].insert(result.runs[f].training_utterances.begin(),
                   result.runs[f].training_utterances.end());
    // Segments the run actually trained on, from its label snapshots.
    for (const auto& snap : result.runs[f].snapshots) {
      for (std::size_t s : snap.segments) seen[f].insert(corpus.utterance_of(s));
    }
  }
  for (std::size_t s = 0; s < corpus.segments.size(); ++s) {
    if (seen.at(result.segment_fold[s]).count(corpus.utterance_of(s))) ++leaks;
  }
  return leaks;
}

MetricsReport utterance_metrics(std::span<const std::size_t> truth,
                                std::span<const std::size_t> predicted, std::size_t num_classes) {
  if (truth.size() != predicted.size()) throw SizeError("metrics: label vectors differ in length");
  if (truth.empty()) throw DataError("metrics: no predictions");
  MetricsReport report;
  report.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  report.support.assign(num_classes, 0);
  report.per_class_recall.assign(num_classes, 0.0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= num_classes || predicted[i] >= num_classes) {
      throw DomainError("metrics: label outside [0, num_classes)");
    }
    ++report.confusion[truth[i]][predicted[i]];
    ++report.support[truth[i]];
    correct += truth[i] == predicted[i];
  }
  report.wa = static_cast<double>(correct) / static_cast<double>(truth.size());
  double recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (report.support[k] == 0) continue;
    report.per_class_recall[k] =
        static_cast<double>(report.confusion[k][k]) / static_cast<double>(report.support[k]);
    recall_sum += report.per_class_recall[k];
    ++present;
  }
  report.ua = recall_sum / static_cast<double>(present);
  return report;
}

std::vector<ClassAccuracy> per_class_report(const MetricsReport& report) {
  std::vector<ClassAccuracy> rows;
  for (std::size_t k = 0; k < report.confusion.size(); ++k) {
    rows.push_back({k, report.support[k], report.confusion[k][k], report.per_class_recall[k]});
  }
  return rows;
}

std::vector<std::size_t> cross_validated_forest(std::span<const std::vector<double>> rows,
                                                std::span<const std::size_t> labels,
                                                std::size_t num_classes, std::size_t folds,
                                                std::uint64_t seed,
                                                const forest::ForestConfig& cfg) {
  if (rows.size() != labels.size()) throw SizeError("forest CV: rows and labels differ in length");
  const FoldAssignment split = stratified_folds(labels, folds, seed);
  std::vector<std::size_t> predicted(rows.size(), 0);
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::vector<double>> train_rows;
    std::vector<std::size_t> train_labels;
    for (std::size_t i : split.training_items(f)) {
      train_rows.push_back(rows[i]);
      train_labels.push_back(labels[i]);
    }
    forest::ForestConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(seed, 400, f);
    const forest::Forest model = forest::fit_forest(train_rows, train_labels, num_classes, fold_cfg);
    for (std::size_t i : split.test_items(f)) predicted[i] = model.predict(rows[i]).label;
  }
  return predicted;
}

}  // namespace segdsl::eval
