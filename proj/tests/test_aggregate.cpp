#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "segdsl/aggregate.hpp"
#include "segdsl/error.hpp"
#include "segdsl/random.hpp"

using namespace segdsl;
using namespace segdsl::agg;
using nn::SoftLabel;

namespace {

std::vector<SoftLabel> random_preds(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<SoftLabel> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(k);
    double s = 0.0;
    for (double& x : v) {
      x = std::pow(rng.uniform(0.0, 1.0), 3.0);
      s += x;
    }
    if (s == 0.0) v.assign(k, 1.0 / static_cast<double>(k));
    else for (double& x : v) x /= s;
    out.emplace_back(v);
  }
  return out;
}

std::vector<std::vector<double>> raw(const std::vector<SoftLabel>& preds) {
  std::vector<std::vector<double>> out;
  for (const auto& p : preds) out.emplace_back(p.probs().begin(), p.probs().end());
  return out;
}

}  // namespace

TEST_CASE("percentile hand values") {
  CHECK(percentile(std::vector<double>{0.0, 1.0}, 50.0) == 0.5);
  for (double p : {0.0, 1.0, 37.0, 100.0}) CHECK(percentile(std::vector<double>{7.0}, p) == 7.0);
  CHECK(percentile(std::vector<double>{1.0, 2.0, 3.0, 4.0}, 25.0) == 1.75);
  CHECK(percentile(std::vector<double>{4.0, 1.0, 3.0, 2.0}, 25.0) == 1.75);
  CHECK(percentile(std::vector<double>{0.0, 1.0}, 1.0) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK_THROWS_AS(percentile(std::vector<double>{}, 50.0), DataError);
  CHECK_THROWS_AS(percentile(std::vector<double>{1.0}, 101.0), DomainError);
}

TEST_CASE("percentile matches the sort-and-interpolate oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> v(1 + rng.index(40));
    for (double& x : v) x = rng.uniform(-2.0, 2.0);
    const double p = rng.uniform(0.0, 100.0);
    CHECK(std::abs(percentile(v, p) - oracle::percentile(v, p)) <= 1e-12);
  }
}

TEST_CASE("representation of two opposite segments") {
  const std::vector<SoftLabel> preds = {SoftLabel({1.0, 0.0}), SoftLabel({0.0, 1.0})};
  const UtteranceRepresentation r = utterance_representation(preds, AggregationConfig{});
  REQUIRE(r.values.size() == 16);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(r.at(k, 0) == 0.5);
    // Interpolation at ranks 0.01 and 0.99 between 0 and 1.
    CHECK(r.at(k, 1) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(r.at(k, 2) == doctest::Approx(0.99).epsilon(1e-12));
    CHECK(r.at(k, 4) == 0.5);
    CHECK(r.at(k, 6) == 0.5);
    CHECK(r.at(k, 7) == 0.5);
  }
}

TEST_CASE("constant predictions collapse every statistic") {
  const SoftLabel p({0.25, 0.2, 0.55});
  const std::vector<SoftLabel> preds(9, p);
  const UtteranceRepresentation r = utterance_representation(preds, AggregationConfig{}, "x");
  CHECK(r.utterance_id == "x");
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t s = 0; s < 6; ++s) CHECK(r.at(k, s) == doctest::Approx(p[k]).epsilon(1e-15));
    // Strict thresholds: 0.2 is not above 0.2.
    CHECK(r.at(k, 6) == (p[k] > 0.2 ? 1.0 : 0.0));
    CHECK(r.at(k, 7) == (p[k] > 0.3 ? 1.0 : 0.0));
  }
}

TEST_CASE("representation matches the brute-force oracle") {
  Rng rng(200);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.index(6);
    const auto preds = random_preds(rng, 1 + rng.index(60), k);
    const UtteranceRepresentation r = utterance_representation(preds, AggregationConfig{});
    const auto expected = oracle::representation(raw(preds), 0.2, 0.3);
    REQUIRE(r.values.size() == 8 * k);
    double worst = 0.0;
    for (std::size_t i = 0; i < expected.size(); ++i) worst = std::max(worst, std::abs(r.values[i] - expected[i]));
    CHECK(worst <= 1e-12);
    for (std::size_t c = 0; c < k; ++c) {
      CHECK(r.at(c, 1) <= r.at(c, 3));
      CHECK(r.at(c, 3) <= r.at(c, 4));
      CHECK(r.at(c, 4) <= r.at(c, 5));
      CHECK(r.at(c, 5) <= r.at(c, 2));
      CHECK(r.at(c, 6) >= r.at(c, 7));
    }
    for (double v : r.values) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("representation ignores segment order") {
  Rng rng(9);
  auto preds = random_preds(rng, 25, 4);
  const auto a = utterance_representation(preds, AggregationConfig{});
  rng.shuffle(std::span<SoftLabel>(preds));
  const auto b = utterance_representation(preds, AggregationConfig{});
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-14));
}

TEST_CASE("aggregation errors") {
  CHECK_THROWS_AS(utterance_representation(std::vector<SoftLabel>{}, AggregationConfig{}), DataError);
  const std::vector<SoftLabel> mixed = {SoftLabel::uniform(2), SoftLabel::uniform(3)};
  CHECK_THROWS_AS(utterance_representation(mixed, AggregationConfig{}), SizeError);
  AggregationConfig bad;
  bad.beta_low = 0.5;
  bad.beta_high = 0.3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(utterance_representation(std::vector<SoftLabel>(3, SoftLabel::uniform(6)), AggregationConfig{}).values.size() == 48);
}
