#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace segdsl::nn {

// Probabilities are clamped to [kProbClamp, 1] inside every logarithm.
inline constexpr double kProbClamp = 1e-12;

// A probability vector over K >= 2 classes.
class SoftLabel {
 public:
  static constexpr double kSumTolerance = 1e-9;

  SoftLabel() = default;
  // Throws DomainError unless every entry lies in [0, 1] and the entries sum
  // to 1 within kSumTolerance.
  explicit SoftLabel(std::vector<double> probs);

  static SoftLabel one_hot(std::size_t index, std::size_t classes);
  static SoftLabel uniform(std::size_t classes);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t k) const { return probs_[k]; }
  std::span<const double> probs() const { return probs_; }

  // Lowest index wins ties.
  std::size_t argmax() const;
  bool is_one_hot() const;

  friend bool operator==(const SoftLabel&, const SoftLabel&) = default;

 private:
  std::vector<double> probs_;
};

// Shannon entropy in nats (0 ln 0 = 0).
double entropy(const SoftLabel& p);

// -sum_k target_k ln(pred_k).
double soft_cross_entropy(const SoftLabel& target, const SoftLabel& pred);

// sum_k target_k ln(target_k / pred_k), evaluated term by term.
double kl_divergence(const SoftLabel& target, const SoftLabel& pred);

// Numerically stable softmax (max-shifted).
SoftLabel softmax(std::span<const double> logits);

}  // namespace segdsl::nn
