#include <doctest.h>

#include <cmath>
#include <vector>

#include "segdsl/error.hpp"
#include "segdsl/random.hpp"
#include "segdsl/soft_label.hpp"

using namespace segdsl;
using nn::SoftLabel;

namespace {

SoftLabel random_label(Rng& rng, std::size_t k, bool allow_zeros = false) {
  std::vector<double> v(k);
  double s = 0.0;
  for (double& x : v) {
    x = allow_zeros && rng.uniform() < 0.2 ? 0.0 : -std::log(1.0 - rng.uniform());
    s += x;
  }
  if (s == 0.0) {
    v[0] = 1.0;
    s = 1.0;
  }
  for (double& x : v) x /= s;
  return SoftLabel(v);
}

}  // namespace

TEST_CASE("construction validates the simplex") {
  CHECK_NOTHROW(SoftLabel({0.5, 0.5}));
  CHECK_THROWS_AS(SoftLabel({0.5, 0.6}), DomainError);
  CHECK_THROWS_AS(SoftLabel({1.2, -0.2}), DomainError);
  CHECK_THROWS_AS(SoftLabel({1.0}), DomainError);
  CHECK_THROWS_AS(SoftLabel({std::nan(""), 1.0}), DomainError);
  CHECK(SoftLabel::one_hot(2, 6).probs()[2] == 1.0);
  CHECK(SoftLabel::one_hot(2, 6).is_one_hot());
  CHECK_THROWS_AS(SoftLabel::one_hot(6, 6), DomainError);
  CHECK(SoftLabel::uniform(4)[3] == 0.25);
}

TEST_CASE("argmax takes the lowest index on ties") {
  CHECK(SoftLabel({0.5, 0.5}).argmax() == 0);
  CHECK(SoftLabel({0.2, 0.4, 0.4}).argmax() == 1);
  CHECK(SoftLabel({0.4, 0.35, 0.25}).argmax() == 0);
}

TEST_CASE("soft cross-entropy hand values") {
  const auto oh = SoftLabel::one_hot(1, 3);
  CHECK(nn::soft_cross_entropy(oh, oh) == 0.0);
  CHECK(nn::soft_cross_entropy(SoftLabel({0.5, 0.5}), SoftLabel({0.5, 0.5})) == doctest::Approx(std::log(2.0)));
  for (std::size_t k : {2u, 4u, 7u}) {
    CHECK(nn::soft_cross_entropy(SoftLabel::one_hot(k - 1, k), SoftLabel::uniform(k)) ==
          doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-14));
  }
  // Zero predicted probability is clamped, keeping the loss finite.
  const double ce = nn::soft_cross_entropy(SoftLabel({0.0, 1.0}), SoftLabel({1.0, 0.0}));
  CHECK(ce == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("KL divergence hand values") {
  CHECK(nn::kl_divergence(SoftLabel({0.3, 0.7}), SoftLabel({0.3, 0.7})) == 0.0);
  CHECK(nn::kl_divergence(SoftLabel({1.0, 0.0}), SoftLabel({0.5, 0.5})) == doctest::Approx(std::log(2.0)));
  CHECK(nn::entropy(SoftLabel::one_hot(0, 3)) == 0.0);
  CHECK(nn::entropy(SoftLabel::uniform(5)) == doctest::Approx(std::log(5.0)));
}

TEST_CASE("KL equals cross-entropy minus entropy on random pairs") {
  Rng rng(31);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t k = 2 + rng.index(7);
    const SoftLabel t = random_label(rng, k, true);
    const SoftLabel p = random_label(rng, k);
    const double kl = nn::kl_divergence(t, p);
    CHECK(std::abs(kl - (nn::soft_cross_entropy(t, p) - nn::entropy(t))) < 1e-12);
    CHECK(kl >= -1e-12);
    CHECK(nn::kl_divergence(t, t) == doctest::Approx(0.0));
  }
}

TEST_CASE("softmax") {
  const std::vector<double> z = {0.0, 0.0, 0.0, 0.0};
  CHECK(nn::softmax(z) == SoftLabel::uniform(4));
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> logits(5);
    for (double& x : logits) x = 30.0 * rng.normal();
    const SoftLabel p = nn::softmax(logits);
    double s = 0.0;
    for (double v : p.probs()) s += v;
    CHECK(std::abs(s - 1.0) < 1e-9);
    auto bumped = logits;
    bumped[2] += 0.5;
    const SoftLabel q = nn::softmax(bumped);
    if (p[2] < 1.0 - 1e-12 && p[2] > 1e-300) CHECK(q[2] > p[2]);
  }
  const std::vector<double> huge = {1000.0, -1000.0};
  CHECK(nn::softmax(huge)[0] == 1.0);
}
