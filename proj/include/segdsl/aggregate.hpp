#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "segdsl/soft_label.hpp"

namespace segdsl::agg {

// Statistics per class, in this order within each class block.
inline constexpr std::size_t kStatsPerClass = 8;

struct AggregationConfig {
  double beta_low = 0.2;
  double beta_high = 0.3;
  double percentile_low = 1.0;
  double percentile_high = 99.0;

  void validate() const;
};

// Linear interpolation between closest ranks: sort ascending,
// r = p/100 * (n - 1), v[floor r] + frac(r) * (v[floor r + 1] - v[floor r]).
// Throws DataError for empty input and DomainError for p outside [0, 100].
double percentile(std::span<const double> values, double p);

// Class-major 8K vector: for class k, entries [8k, 8k + 8) hold
// mean, p1, p99, q1, median, q3, frac(p > beta_low), frac(p > beta_high).
struct UtteranceRepresentation {
  std::string utterance_id;
  std::vector<double> values;

  double at(std::size_t klass, std::size_t stat) const { return values[klass * kStatsPerClass + stat]; }
};

// Throws DataError for an empty utterance and SizeError for mixed K.
UtteranceRepresentation utterance_representation(std::span<const nn::SoftLabel> preds,
                                                 const AggregationConfig& cfg,
                                                 std::string utterance_id = {});

}  // namespace segdsl::agg
