#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "segdsl/backbone.hpp"

namespace segdsl::nn {

enum class Optimizer { kAdam, kSgd };

struct TrainConfig {
  double initial_lr = 0.001;
  double lr_decay_rate = 0.8;
  std::size_t decay_every_epochs = 2;
  std::size_t batch_size = 128;
  std::size_t early_stop_patience = 3;
  std::size_t max_epochs = 20;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  Optimizer optimizer = Optimizer::kAdam;
  // Fraction of training groups (utterances) held out to monitor early stopping.
  double holdout_fraction = 0.1;
  // Keep the parameters of the epoch with the lowest held-out loss.
  bool restore_best = true;

  void validate() const;
  double learning_rate(std::size_t epoch) const;
};

// One training item: a raw segment matrix, its target distribution and the
// group (utterance) it belongs to. The held-out split is drawn over groups.
struct TrainingExample {
  std::span<const float> features;
  const SoftLabel* target = nullptr;
  std::size_t group = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double holdout_loss = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
  std::size_t train_examples = 0;
  std::size_t holdout_examples = 0;

  // One JSON object per line: epoch, train_loss, holdout_loss, lr.
  std::string to_jsonl() const;
};

// Fits the input normalizer on the non-held-out examples, then minimizes the
// mean soft cross-entropy with mini-batches. Throws DataError on an empty
// dataset and NumericError on a non-finite batch loss.
TrainingLog train(Backbone& model, std::span<const TrainingExample> data, const TrainConfig& cfg);

// Mean soft cross-entropy gradient over a batch, in parameter order.
std::vector<double> gradients(const Backbone& model, std::span<const TrainingExample> batch);

// Mean soft cross-entropy over a set of examples.
double mean_loss(const Backbone& model, std::span<const TrainingExample> data);

}  // namespace segdsl::nn
