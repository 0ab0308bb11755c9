#include "segdsl/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "segdsl/error.hpp"
#include "segdsl/random.hpp"

namespace segdsl::nn {
namespace {

void check_targets(const Backbone& model, std::span<const TrainingExample> data) {
  for (const auto& ex : data) {
    if (ex.target == nullptr) throw DataError("training example without a target");
    if (ex.target->size() != model.num_classes()) {
      throw SizeError("target over " + std::to_string(ex.target->size()) +
                      " classes for a model with " + std::to_string(model.num_classes()));
    }
  }
}

class AdamState {
 public:
  explicit AdamState(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr,
            const TrainConfig& cfg) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg.adam_beta1 * m_[i] + (1.0 - cfg.adam_beta1) * grad[i];
      v_[i] = cfg.adam_beta2 * v_[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
      const double m_hat = m_[i] / c1;
      const double v_hat = v_[i] / c2;
      params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
    }
  }

 private:
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

// Accumulates the summed gradient of `indices` into grad, returns summed loss.
double accumulate(const Backbone& model, std::span<const TrainingExample> data,
                  std::span<const std::size_t> indices, std::span<double> grad,
                  std::vector<double>& input) {
  double loss = 0.0;
  for (std::size_t i : indices) {
    model.prepare_input(data[i].features, input);
    // ReLU would silently map NaN inputs to zero.
    for (double x : input) {
      if (!std::isfinite(x)) return std::numeric_limits<double>::quiet_NaN();
    }
    loss += model.backward(input, *data[i].target, grad);
  }
  return loss;
}

double loss_over(const Backbone& model, std::span<const TrainingExample> data,
                 std::span<const std::size_t> indices) {
  std::vector<double> input(model.input_size());
  std::vector<double> logits(model.num_classes());
  double total = 0.0;
  for (std::size_t i : indices) {
    model.prepare_input(data[i].features, input);
    model.forward(input, logits);
    total += soft_cross_entropy(*data[i].target, softmax(logits));
  }
  return indices.empty() ? 0.0 : total / static_cast<double>(indices.size());
}

}  // namespace

void TrainConfig::validate() const {
  if (!(initial_lr > 0.0)) throw ConfigError("initial learning rate must be > 0");
  if (!(lr_decay_rate > 0.0 && lr_decay_rate <= 1.0)) {
    throw ConfigError("learning-rate decay must lie in (0, 1]");
  }
  if (decay_every_epochs == 0) throw ConfigError("decay interval must be >= 1 epoch");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (max_epochs == 0) throw ConfigError("max epochs must be >= 1");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout fraction must lie in [0, 1)");
  }
}

double TrainConfig::learning_rate(std::size_t epoch) const {
  return initial_lr * std::pow(lr_decay_rate, static_cast<double>(epoch / decay_every_epochs));
}

std::string TrainingLog::to_jsonl() const {
  std::ostringstream out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json row;
    row["epoch"] = e.epoch;
    row["train_loss"] = e.train_loss;
    row["holdout_loss"] = std::isnan(e.holdout_loss) ? nlohmann::ordered_json(nullptr)
                                                     : nlohmann::ordered_json(e.holdout_loss);
    row["lr"] = e.lr;
    out << row.dump() << '\n';
  }
  return out.str();
}

std::vector<double> gradients(const Backbone& model, std::span<const TrainingExample> batch) {
  if (batch.empty()) throw DataError("gradient of an empty batch");
  check_targets(model, batch);
  std::vector<double> grad(model.parameters().size(), 0.0);
  std::vector<std::size_t> all(batch.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<double> input(model.input_size());
  accumulate(model, batch, all, grad, input);
  for (double& g : grad) g /= static_cast<double>(batch.size());
  return grad;
}

double mean_loss(const Backbone& model, std::span<const TrainingExample> data) {
  check_targets(model, data);
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  return loss_over(model, data, all);
}

TrainingLog train(Backbone& model, std::span<const TrainingExample> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw DataError("cannot train on an empty dataset");
  check_targets(model, data);

  // Held-out split over groups.
  std::vector<std::size_t> groups;
  for (const auto& ex : data) groups.push_back(ex.group);
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
  std::size_t n_holdout = 0;
  if (cfg.holdout_fraction > 0.0 && groups.size() >= 2) {
    n_holdout = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.holdout_fraction * groups.size())));
    n_holdout = std::min(n_holdout, groups.size() - 1);
  }
  Rng split_rng(derive_seed(cfg.seed, 1));
  split_rng.shuffle(std::span<std::size_t>(groups));
  std::map<std::size_t, bool> is_holdout;
  for (std::size_t i = 0; i < groups.size(); ++i) is_holdout[groups[i]] = i < n_holdout;

  std::vector<std::size_t> train_idx, holdout_idx;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (is_holdout[data[i].group] ? holdout_idx : train_idx).push_back(i);
  }

  std::vector<std::span<const float>> train_views;
  train_views.reserve(train_idx.size());
  for (std::size_t i : train_idx) train_views.push_back(data[i].features);
  model.set_normalizer(
      FeatureNormalizer::fit(train_views, model.input_height(), model.input_width()));

  TrainingLog log;
  log.train_examples = train_idx.size();
  log.holdout_examples = holdout_idx.size();

  auto params = model.parameters();
  std::vector<double> grad(params.size());
  std::vector<double> input(model.input_size());
  std::vector<double> best_params(params.begin(), params.end());
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_best = 0;
  AdamState adam(params.size());
  Rng order_rng(derive_seed(cfg.seed, 2));

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = cfg.learning_rate(epoch);
    order_rng.shuffle(std::span<std::size_t>(train_idx));
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(train_idx.size(), start + cfg.batch_size);
      const auto batch = std::span<const std::size_t>(train_idx).subspan(start, stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double batch_loss = accumulate(model, data, batch, grad, input);
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite training loss in epoch " + std::to_string(epoch), batch_index);
      }
      epoch_loss += batch_loss;
      const double scale = 1.0 / static_cast<double>(batch.size());
      for (double& g : grad) g *= scale;
      if (cfg.optimizer == Optimizer::kAdam) {
        adam.step(params, grad, lr, cfg);
      } else {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss / static_cast<double>(train_idx.size());
    record.lr = lr;
    // Without a held-out set the training loss drives early stopping.
    const double monitored = holdout_idx.empty() ? record.train_loss
                                                 : loss_over(model, data, holdout_idx);
    if (!holdout_idx.empty()) record.holdout_loss = monitored;
    log.epochs.push_back(record);

    if (monitored < best_loss) {
      best_loss = monitored;
      log.best_epoch = epoch;
      epochs_since_best = 0;
      std::copy(params.begin(), params.end(), best_params.begin());
    } else if (++epochs_since_best >= cfg.early_stop_patience) {
      log.early_stopped = true;
      break;
    }
  }
  if (cfg.restore_best) std::copy(best_params.begin(), best_params.end(), params.begin());
  return log;
}

}  // namespace segdsl::nn
