#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "segdsl/backbone.hpp"
#include "segdsl/error.hpp"
#include "segdsl/random.hpp"
#include "segdsl/train.hpp"

using namespace segdsl;
using namespace segdsl::nn;

namespace {

CnnArchitecture small_arch(std::size_t classes) {
  CnnArchitecture a;
  a.height = 16;
  a.width = 12;
  a.conv1_channels = 4;
  a.conv2_channels = 6;
  a.classes = classes;
  return a;
}

// Class 0 lights the upper rows, class 1 the lower rows; both carry noise.
struct Separable {
  std::vector<std::vector<float>> features;
  std::vector<std::size_t> labels;
  std::vector<SoftLabel> targets;
  std::vector<TrainingExample> examples;
};

Separable separable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Separable d;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = i % 2;
    std::vector<float> f(16 * 12);
    for (std::size_t r = 0; r < 16; ++r) {
      for (std::size_t c = 0; c < 12; ++c) {
        const bool lit = y == 0 ? r < 6 : r >= 10;
        f[r * 12 + c] = static_cast<float>((lit ? 1.5 : 0.0) + rng.normal());
      }
    }
    d.features.push_back(std::move(f));
    d.labels.push_back(y);
    d.targets.push_back(SoftLabel::one_hot(y, 2));
  }
  for (std::size_t i = 0; i < n; ++i) d.examples.push_back({d.features[i], &d.targets[i], i / 4});
  return d;
}

TrainConfig quick_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.max_epochs = 12;
  cfg.batch_size = 16;
  cfg.initial_lr = 0.01;
  return cfg;
}

}  // namespace

TEST_CASE("learning-rate schedule steps every two epochs") {
  TrainConfig cfg;
  CHECK(cfg.learning_rate(0) == 0.001);
  CHECK(cfg.learning_rate(1) == 0.001);
  CHECK(cfg.learning_rate(2) == doctest::Approx(0.0008));
  CHECK(cfg.learning_rate(5) == doctest::Approx(0.001 * 0.8 * 0.8));
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("separable segments are learned") {
  Separable train_set = separable(200, 1);
  Separable test_set = separable(100, 2);
  ReferenceCnn model(small_arch(2), 3);
  const TrainingLog log = train(model, train_set.examples, quick_config(4));
  CHECK(log.holdout_examples > 0);
  CHECK(log.train_examples + log.holdout_examples == 200);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < 100; ++i) correct += model.predict_proba(test_set.features[i]).argmax() == test_set.labels[i];
  CHECK(static_cast<double>(correct) / 100.0 >= 0.95);
  CHECK(log.epochs.front().train_loss > log.epochs.back().train_loss);
}

TEST_CASE("uniform targets give near-uniform predictions") {
  Separable d = separable(120, 5);
  const SoftLabel u = SoftLabel::uniform(2);
  for (auto& e : d.examples) e.target = &u;
  ReferenceCnn model(small_arch(2), 6);
  train(model, d.examples, quick_config(7));
  double h = 0.0;
  for (const auto& f : d.features) h += entropy(model.predict_proba(f));
  CHECK(h / d.features.size() >= 0.95 * std::log(2.0));
}

TEST_CASE("training is bit-for-bit reproducible") {
  Separable d = separable(64, 8);
  ReferenceCnn a(small_arch(2), 9), b(small_arch(2), 9);
  TrainConfig cfg = quick_config(10);
  cfg.max_epochs = 3;
  const TrainingLog la = train(a, d.examples, cfg);
  const TrainingLog lb = train(b, d.examples, cfg);
  CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  CHECK(la.to_jsonl() == lb.to_jsonl());
}

TEST_CASE("early stopping and the training log") {
  Separable d = separable(80, 11);
  ReferenceCnn model(small_arch(2), 12);
  TrainConfig cfg = quick_config(13);
  cfg.max_epochs = 60;
  cfg.early_stop_patience = 2;
  const TrainingLog log = train(model, d.examples, cfg);
  CHECK(log.epochs.size() <= 60);
  if (log.early_stopped) CHECK(log.epochs.size() == log.best_epoch + 1 + 2);
  const std::string jsonl = log.to_jsonl();
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == static_cast<long>(log.epochs.size()));
  CHECK(jsonl.find("\"holdout_loss\"") != std::string::npos);
}

TEST_CASE("a single group trains without a held-out split") {
  Separable d = separable(20, 14);
  for (auto& e : d.examples) e.group = 0;
  ReferenceCnn model(small_arch(2), 15);
  TrainConfig cfg = quick_config(16);
  cfg.max_epochs = 2;
  const TrainingLog log = train(model, d.examples, cfg);
  CHECK(log.holdout_examples == 0);
  CHECK(std::isnan(log.epochs[0].holdout_loss));
}

TEST_CASE("non-finite inputs raise a numeric error naming the batch") {
  Separable d = separable(40, 17);
  d.features[5][3] = std::numeric_limits<float>::quiet_NaN();
  ReferenceCnn model(small_arch(2), 18);
  TrainConfig cfg = quick_config(19);
  cfg.holdout_fraction = 0.0;
  CHECK_THROWS_AS(train(model, d.examples, cfg), NumericError);
}

TEST_CASE("bad training input") {
  ReferenceCnn model(small_arch(2), 1);
  std::vector<TrainingExample> none;
  CHECK_THROWS_AS(train(model, none, TrainConfig{}), DataError);
  Separable d = separable(8, 1);
  const SoftLabel three = SoftLabel::uniform(3);
  d.examples[0].target = &three;
  CHECK_THROWS_AS(train(model, d.examples, TrainConfig{}), SizeError);
}
