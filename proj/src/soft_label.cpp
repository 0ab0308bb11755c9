#include "segdsl/soft_label.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "segdsl/error.hpp"

namespace segdsl::nn {
namespace {

void require_same_size(const SoftLabel& a, const SoftLabel& b) {
  if (a.size() != b.size()) {
    throw SizeError("soft label dimension mismatch: " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  }
}

double clamped_log(double p) { return std::log(std::clamp(p, kProbClamp, 1.0)); }

}  // namespace

SoftLabel::SoftLabel(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) throw DomainError("soft label needs at least 2 classes");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= -kSumTolerance && p <= 1.0 + kSumTolerance)) {
      throw DomainError("soft label entry outside [0, 1]: " + std::to_string(p));
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw DomainError("soft label does not sum to 1 (sum = " + std::to_string(sum) + ")");
  }
}

SoftLabel SoftLabel::one_hot(std::size_t index, std::size_t classes) {
  if (index >= classes) throw DomainError("one-hot index out of range");
  std::vector<double> p(classes, 0.0);
  p[index] = 1.0;
  return SoftLabel(std::move(p));
}

SoftLabel SoftLabel::uniform(std::size_t classes) {
  return SoftLabel(std::vector<double>(classes, 1.0 / static_cast<double>(classes)));
}

std::size_t SoftLabel::argmax() const {
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

bool SoftLabel::is_one_hot() const {
  std::size_t ones = 0;
  for (double p : probs_) {
    if (p == 1.0) {
      ++ones;
    } else if (p != 0.0) {
      return false;
    }
  }
  return ones == 1;
}

double entropy(const SoftLabel& p) {
  double h = 0.0;
  for (double v : p.probs()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double soft_cross_entropy(const SoftLabel& target, const SoftLabel& pred) {
  require_same_size(target, pred);
  double loss = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k] != 0.0) loss -= target[k] * clamped_log(pred[k]);
  }
  return loss;
}

double kl_divergence(const SoftLabel& target, const SoftLabel& pred) {
  require_same_size(target, pred);
  double kl = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k] > 0.0) kl += target[k] * (std::log(target[k]) - clamped_log(pred[k]));
  }
  return kl;
}

SoftLabel softmax(std::span<const double> logits) {
  const double shift = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - shift);
    total += p[k];
  }
  for (double& v : p) v /= total;
  return SoftLabel(std::move(p));
}

}  // namespace segdsl::nn
