#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "helpers.hpp"
#include "segdsl/error.hpp"
#include "segdsl/forest.hpp"
#include "segdsl/random.hpp"

using namespace segdsl;
using namespace segdsl::forest;

namespace {

struct Blobs {
  std::vector<std::vector<double>> x;
  std::vector<std::size_t> y;
};

// Two unit-variance Gaussian blobs centered at (-3, -3) and (3, 3).
Blobs blobs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Blobs b;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % 2;
    const double mu = c == 0 ? -3.0 : 3.0;
    b.x.push_back({mu + rng.normal(), mu + rng.normal()});
    b.y.push_back(c);
  }
  return b;
}

double accuracy(const Forest& f, const Blobs& b) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < b.x.size(); ++i) ok += f.predict(b.x[i]).label == b.y[i];
  return static_cast<double>(ok) / static_cast<double>(b.x.size());
}

}  // namespace

TEST_CASE("separable blobs") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Blobs train = blobs(400, seed);
    const Blobs test = blobs(400, seed + 100);
    ForestConfig cfg;
    cfg.seed = seed;
    const Forest f = fit_forest(train.x, train.y, 2, cfg);
    CHECK(f.trees().size() == 100);
    CHECK(accuracy(f, test) >= 0.98);
    CHECK(accuracy(f, train) >= 0.99);
    REQUIRE(f.oob_accuracy().has_value());
    CHECK(*f.oob_accuracy() >= 0.98);
    CHECK(f.predict(std::vector<double>{-3.0, -3.0}).label == 0);
    CHECK(f.predict(std::vector<double>{3.0, 3.0}).label == 1);
  }
}

TEST_CASE("duplicated training data keeps training accuracy") {
  for (std::uint64_t seed : {4u, 5u, 6u}) {
    const Blobs b = blobs(200, seed);
    Blobs twice = b;
    twice.x.insert(twice.x.end(), b.x.begin(), b.x.end());
    twice.y.insert(twice.y.end(), b.y.begin(), b.y.end());
    ForestConfig cfg;
    cfg.seed = seed;
    const double base = accuracy(fit_forest(b.x, b.y, 2, cfg), b);
    CHECK(accuracy(fit_forest(twice.x, twice.y, 2, cfg), b) >= base - 0.01);
  }
}

TEST_CASE("forests are deterministic and checkpoints round trip") {
  const Blobs b = blobs(120, 7);
  ForestConfig cfg;
  cfg.seed = 11;
  cfg.n_trees = 20;
  const Forest a = fit_forest(b.x, b.y, 2, cfg);
  const Forest again = fit_forest(b.x, b.y, 2, cfg);
  CHECK(a == again);
  cfg.seed = 12;
  CHECK(!(a == fit_forest(b.x, b.y, 2, cfg)));

  TempDir dir("forest");
  save_forest(dir / "f.segt", a);
  CHECK(load_forest(dir / "f.segt") == a);
  std::ofstream(dir / "bad.segt") << "nonsense";
  CHECK_THROWS_AS(load_forest(dir / "bad.segt"), DataError);
}

TEST_CASE("probabilities are distributions") {
  Rng rng(8);
  std::vector<std::vector<double>> x;
  std::vector<std::size_t> y;
  for (int i = 0; i < 150; ++i) {
    x.push_back({rng.normal(), rng.normal(), rng.normal()});
    y.push_back(rng.index(3));
  }
  ForestConfig cfg;
  cfg.n_trees = 30;
  const Forest f = fit_forest(x, y, 3, cfg);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> q = {rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
    const Prediction p = f.predict(q);
    double s = 0.0;
    for (double v : p.probabilities) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-9);
    CHECK(p.probabilities[p.label] == *std::max_element(p.probabilities.begin(), p.probabilities.end()));
  }
  CHECK_THROWS_AS(f.predict(std::vector<double>{1.0}), SizeError);
}

TEST_CASE("single tree on pure leaves") {
  const std::vector<std::vector<double>> x = {{0.0}, {1.0}, {10.0}, {11.0}};
  const std::vector<std::size_t> y = {0, 0, 1, 1};
  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.bootstrap = false;
  const Forest f = fit_forest(x, y, 2, cfg);
  const Prediction p = f.predict(std::vector<double>{10.5});
  CHECK(p.label == 1);
  CHECK(p.probabilities[1] == 1.0);
  // Split at the midpoint between 1 and 10.
  CHECK(f.trees()[0].nodes[0].threshold == 5.5);
}

TEST_CASE("forest input errors") {
  ForestConfig cfg;
  const std::vector<std::vector<double>> none;
  const std::vector<std::size_t> no_labels;
  CHECK_THROWS_AS(fit_forest(none, no_labels, 2, cfg), DataError);
  const std::vector<std::vector<double>> x = {{0.0}, {1.0}};
  CHECK_THROWS_AS(fit_forest(x, std::vector<std::size_t>{0, 0}, 2, cfg), DataError);
  CHECK_THROWS_AS(fit_forest(x, std::vector<std::size_t>{0}, 2, cfg), SizeError);
  const std::vector<std::vector<double>> ragged = {{0.0}, {1.0, 2.0}};
  CHECK_THROWS_AS(fit_forest(ragged, std::vector<std::size_t>{0, 1}, 2, cfg), SizeError);
  cfg.n_trees = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
