#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "segdsl/backbone.hpp"
#include "segdsl/error.hpp"
#include "segdsl/random.hpp"
#include "segdsl/train.hpp"

using namespace segdsl;
using namespace segdsl::nn;

namespace {

CnnArchitecture tiny_arch() {
  CnnArchitecture a;
  a.height = 16;
  a.width = 12;
  a.conv1_channels = 2;
  a.conv2_channels = 3;
  a.classes = 3;
  return a;
}

struct Batch {
  std::vector<std::vector<float>> features;
  std::vector<SoftLabel> targets;
  std::vector<TrainingExample> examples;
};

Batch random_batch(Rng& rng, const CnnArchitecture& a, std::size_t n) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> f(a.height * a.width);
    for (float& x : f) x = static_cast<float>(rng.normal());
    b.features.push_back(std::move(f));
    std::vector<double> t(a.classes);
    double s = 0.0;
    for (double& x : t) {
      x = rng.uniform(0.01, 1.0);
      s += x;
    }
    for (double& x : t) x /= s;
    b.targets.emplace_back(t);
  }
  for (std::size_t i = 0; i < n; ++i) b.examples.push_back({b.features[i], &b.targets[i], i});
  return b;
}

}  // namespace

TEST_CASE("tiny architecture stays under 500 parameters") {
  const CnnArchitecture a = tiny_arch();
  CHECK(a.parameter_count() <= 500);
  ReferenceCnn m(a, 1);
  CHECK(m.parameters().size() == a.parameter_count());
  CnnArchitecture too_small = a;
  too_small.height = 8;
  CHECK_THROWS_AS(too_small.validate(), ConfigError);
}

TEST_CASE("analytic gradients match central differences") {
  const CnnArchitecture a = tiny_arch();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_seed(1234, seed));
    ReferenceCnn model(a, derive_seed(99, seed));
    // Biases start at zero; move them off so every parameter is exercised.
    for (double& p : model.parameters()) p += 0.05 * rng.normal();
    Batch batch = random_batch(rng, a, 4);

    const std::vector<double> analytic = gradients(model, batch.examples);
    double worst = 0.0;
    const double h = 1e-5;
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
      const double keep = model.parameters()[i];
      model.parameters()[i] = keep + h;
      const double up = mean_loss(model, batch.examples);
      model.parameters()[i] = keep - h;
      const double down = mean_loss(model, batch.examples);
      model.parameters()[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-7});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("zero dense layer gives uniform output and zero bias gradient under uniform targets") {
  CnnArchitecture a = tiny_arch();
  ReferenceCnn m(a, 3);
  std::fill(m.dense_weights().begin(), m.dense_weights().end(), 0.0);
  std::fill(m.dense_bias().begin(), m.dense_bias().end(), 0.0);
  Rng rng(2);
  std::vector<float> f(a.height * a.width);
  for (float& x : f) x = static_cast<float>(rng.normal());
  const SoftLabel p = m.predict_proba(f);
  for (double v : p.probs()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const SoftLabel u = SoftLabel::uniform(3);
  std::vector<TrainingExample> ex = {{f, &u, 0}};
  const auto g = gradients(m, ex);
  const std::size_t n = m.parameters().size();
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(g[n - 3 + k]) < 1e-15);
}

TEST_CASE("duplicating every batch item leaves the mean gradient unchanged") {
  const CnnArchitecture a = tiny_arch();
  Rng rng(17);
  ReferenceCnn m(a, 5);
  Batch b = random_batch(rng, a, 5);
  std::vector<TrainingExample> doubled;
  for (const auto& e : b.examples) {
    doubled.push_back(e);
    doubled.push_back(e);
  }
  const auto g1 = gradients(m, b.examples);
  const auto g2 = gradients(m, doubled);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-12));
}

TEST_CASE("predictions are distributions and raising a logit raises its probability") {
  CnnArchitecture a;
  a.classes = 4;
  ReferenceCnn m(a, 7);
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<float> f(64 * 32);
    for (float& x : f) x = static_cast<float>(rng.normal());
    const SoftLabel p = m.predict_proba(f);
    double s = 0.0;
    for (double v : p.probs()) s += v;
    CHECK(std::abs(s - 1.0) < 1e-9);
    ReferenceCnn bumped = m;
    bumped.dense_bias()[1] += 0.3;
    CHECK(bumped.predict_proba(f)[1] > p[1]);
  }
  std::vector<float> wrong(10);
  CHECK_THROWS_AS(m.predict_proba(wrong), SizeError);
}

TEST_CASE("initialization is seeded") {
  CnnArchitecture a = tiny_arch();
  ReferenceCnn x(a, 11), y(a, 11), z(a, 12);
  CHECK(std::equal(x.parameters().begin(), x.parameters().end(), y.parameters().begin()));
  CHECK(!std::equal(x.parameters().begin(), x.parameters().end(), z.parameters().begin()));
  auto c = x.clone();
  c->initialize(12);
  CHECK(std::equal(c->parameters().begin(), c->parameters().end(), z.parameters().begin()));
}

TEST_CASE("normalizer standardizes each row") {
  std::vector<float> m1 = {1, 3, 10, 10}, m2 = {5, 7, 10, 10};
  std::vector<std::span<const float>> ms = {m1, m2};
  const FeatureNormalizer n = FeatureNormalizer::fit(ms, 2, 2);
  CHECK(n.mean[0] == doctest::Approx(4.0));
  CHECK(n.mean[1] == doctest::Approx(10.0));
  CHECK(n.inv_std[1] == 1.0);  // constant row
  std::vector<double> out(4);
  n.apply(m1, out, 2);
  CHECK(out[0] == doctest::Approx(-3.0 / std::sqrt(5.0)));
  CHECK(out[2] == 0.0);
  FeatureNormalizer identity;
  identity.apply(m1, out, 2);
  CHECK(out[1] == 3.0);
}

TEST_CASE("model checkpoint round trip") {
  TempDir dir("model");
  CnnArchitecture a;
  a.classes = 5;
  ReferenceCnn m(a, 21);
  FeatureNormalizer n;
  n.mean.assign(64, 0.5);
  n.inv_std.assign(64, 2.0);
  m.set_normalizer(n);
  save_model(dir / "m.segm", m);
  const ReferenceCnn r = load_model(dir / "m.segm");
  CHECK(r.architecture() == a);
  CHECK(std::equal(r.parameters().begin(), r.parameters().end(), m.parameters().begin()));
  CHECK(r.normalizer().mean == n.mean);
  CHECK(r.normalizer().inv_std == n.inv_std);

  std::ofstream(dir / "bad.segm") << "SEGF garbage";
  CHECK_THROWS_AS(load_model(dir / "bad.segm"), DataError);
}
