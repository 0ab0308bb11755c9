#include "segdsl/aggregate.hpp"

#include <algorithm>
#include <cmath>

#include "segdsl/error.hpp"

namespace segdsl::agg {
namespace {

double sorted_percentile(const std::vector<double>& sorted, double p) {
  const double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

void check_p(double p) {
  if (!(p >= 0.0 && p <= 100.0)) throw DomainError("percentile must lie in [0, 100]");
}

}  // namespace

void AggregationConfig::validate() const {
  if (!(beta_low >= 0.0 && beta_low < beta_high && beta_high <= 1.0)) {
    throw ConfigError("aggregation thresholds need 0 <= beta_low < beta_high <= 1");
  }
  check_p(percentile_low);
  check_p(percentile_high);
}

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw DataError("percentile of an empty sequence");
  check_p(p);
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted_percentile(sorted, p);
}

UtteranceRepresentation utterance_representation(std::span<const nn::SoftLabel> preds,
                                                 const AggregationConfig& cfg,
                                                 std::string utterance_id) {
  cfg.validate();
  if (preds.empty()) throw DataError("utterance '" + utterance_id + "' has no segment predictions");
  const std::size_t classes = preds.front().size();
  UtteranceRepresentation rep;
  rep.utterance_id = std::move(utterance_id);
  rep.values.assign(classes * kStatsPerClass, 0.0);
  const double n = static_cast<double>(preds.size());
  std::vector<double> column(preds.size());
  for (std::size_t k = 0; k < classes; ++k) {
    double sum = 0.0;
    std::size_t above_low = 0, above_high = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i].size() != classes) throw SizeError("segment predictions disagree on K");
      const double p = preds[i][k];
      column[i] = p;
      sum += p;
      above_low += p > cfg.beta_low;
      above_high += p > cfg.beta_high;
    }
    std::sort(column.begin(), column.end());
    double* h = rep.values.data() + k * kStatsPerClass;
    h[0] = sum / n;
    h[1] = sorted_percentile(column, cfg.percentile_low);
    h[2] = sorted_percentile(column, cfg.percentile_high);
    h[3] = sorted_percentile(column, 25.0);
    h[4] = sorted_percentile(column, 50.0);
    h[5] = sorted_percentile(column, 75.0);
    h[6] = static_cast<double>(above_low) / n;
    h[7] = static_cast<double>(above_high) / n;
  }
  return rep;
}

}  // namespace segdsl::agg
