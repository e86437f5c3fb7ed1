#include "batchqc/ensemble.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "batchqc/rng.hpp"

using namespace batchqc;

namespace {

Matrix from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

double training_accuracy(const Forest& forest, const Matrix& X, const std::vector<int>& y) {
  const auto predicted = forest.predict_class(X);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hits += (predicted[i] == y[i]);
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

// Two well-separated Gaussian blobs plus noise features.
void make_blobs(Rng& rng, std::size_t n, std::size_t d, Matrix& X, std::vector<int>& y) {
  X = Matrix(n, d);
  y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(rng.next_below(2));
    for (std::size_t j = 0; j < d; ++j) {
      const double shift = (j < 2 && y[i] == 1) ? 2.5 : 0.0;
      X(i, j) = rng.next_normal() + shift;
    }
  }
  y[0] = 0;
  y[1] = 1;
}

}  // namespace

TEST_CASE("one separating feature: perfect fit, importance [1.0]") {
  const Matrix X = from_rows({{-2}, {-1}, {1}, {2}});
  const std::vector<int> y = {0, 0, 1, 1};
  for (const SplitMode mode : {SplitMode::rf_best_split, SplitMode::extra_random_split}) {
    for (const int depth : {1, 0}) {
      ForestParams params =
          mode == SplitMode::rf_best_split ? rf_defaults() : extra_trees_defaults();
      params.n_trees = 25;
      params.max_depth = depth;
      params.seed = 7;
      const Forest forest = fit_forest(X, y, params);
      CHECK(training_accuracy(forest, X, y) == doctest::Approx(1.0));
      REQUIRE(forest.importances.size() == 1);
      CHECK(forest.importances[0] == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("constant labels degenerate to a single confident leaf") {
  const Matrix X = from_rows({{1}, {2}, {3}});
  const std::vector<int> y = {1, 1, 1};
  ForestParams params = rf_defaults();
  params.n_trees = 5;
  params.seed = 1;
  const Forest forest = fit_forest(X, y, params);
  const auto proba = forest.predict_proba(X);
  for (const double p : proba) CHECK(p == doctest::Approx(1.0));
  const double total =
      std::accumulate(forest.importances.begin(), forest.importances.end(), 0.0);
  CHECK(total == doctest::Approx(0.0));  // no split anywhere, normalization skipped
}

TEST_CASE("XOR with duplicates is memorized at unlimited depth") {
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  for (int rep = 0; rep < 25; ++rep) {
    rows.push_back({0, 0});
    y.push_back(0);
    rows.push_back({0, 1});
    y.push_back(1);
    rows.push_back({1, 0});
    y.push_back(1);
    rows.push_back({1, 1});
    y.push_back(0);
  }
  const Matrix X = from_rows(rows);
  ForestParams params = rf_defaults();
  params.n_trees = 100;
  params.seed = 11;
  const Forest forest = fit_forest(X, y, params);
  CHECK(training_accuracy(forest, X, y) == doctest::Approx(1.0));
}

TEST_CASE("predict_proba averages leaf frequencies over trees") {
  // Hand-assembled two-tree forest: one pure leaf (freq 1.0), one mixed (0.5).
  Forest forest;
  forest.n_classes = 2;
  forest.n_features = 1;
  Tree pure;
  pure.nodes.push_back({-1, 0.0, -1, -1, {0.0, 1.0}});
  Tree mixed;
  mixed.nodes.push_back({-1, 0.0, -1, -1, {0.5, 0.5}});
  forest.trees = {pure, mixed};
  const auto proba = forest.predict_proba(from_rows({{0.0}}));
  CHECK(proba[0] == doctest::Approx(0.75));
}

TEST_CASE("pure training clusters predict their class with probability 1") {
  Rng rng(3);
  Matrix X;
  std::vector<int> y;
  make_blobs(rng, 200, 4, X, y);
  ForestParams params = rf_defaults();
  params.bootstrap = false;  // every tree sees every sample
  params.n_trees = 30;
  params.seed = 5;
  const Forest forest = fit_forest(X, y, params);
  const auto proba = forest.predict_proba(X);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1)
      CHECK(proba[i] > 0.5);
    else
      CHECK(proba[i] < 0.5);
  }
  // Memorization: unlimited depth, min_leaf 1, no bootstrap -> exact leaves.
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(std::abs(proba[i] - static_cast<double>(y[i])) < 1e-12);
}

TEST_CASE("probabilities live in [0,1] and are multiples of 1/n_trees on pure leaves") {
  Rng rng(17);
  Matrix X;
  std::vector<int> y;
  make_blobs(rng, 120, 3, X, y);
  ForestParams params = rf_defaults();
  params.n_trees = 8;
  params.seed = 23;
  params.class_weight = ForestParams::ClassWeight::none;
  const Forest forest = fit_forest(X, y, params);
  Matrix probe(40, 3);
  for (std::size_t i = 0; i < probe.rows(); ++i)
    for (std::size_t j = 0; j < 3; ++j) probe(i, j) = rng.next_normal() * 2;
  for (const double p : forest.predict_proba(probe)) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    const double scaled = p * 8.0;
    CHECK(std::abs(scaled - std::round(scaled)) < 1e-9);  // pure leaves only
  }
}

TEST_CASE("fit is deterministic and independent of the worker count") {
  Rng rng(29);
  Matrix X;
  std::vector<int> y;
  make_blobs(rng, 150, 5, X, y);
  ForestParams params = rf_defaults();
  params.n_trees = 20;
  params.seed = 99;
  const Forest a = fit_forest(X, y, params, 0, 1);
  const Forest b = fit_forest(X, y, params, 0, 4);
  REQUIRE(a.trees.size() == b.trees.size());
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    REQUIRE(a.trees[t].nodes.size() == b.trees[t].nodes.size());
    for (std::size_t n = 0; n < a.trees[t].nodes.size(); ++n) {
      CHECK(a.trees[t].nodes[n].feature == b.trees[t].nodes[n].feature);
      CHECK(a.trees[t].nodes[n].threshold == b.trees[t].nodes[n].threshold);
      CHECK(a.trees[t].nodes[n].leaf_freqs == b.trees[t].nodes[n].leaf_freqs);
    }
  }
  CHECK(a.importances == b.importances);
  const auto pa = a.predict_proba(X, 1);
  const auto pb = b.predict_proba(X, 4);
  CHECK(pa == pb);
}

TEST_CASE("golden regression: seeded blob predictions are frozen") {
  Rng rng(424242);
  Matrix X;
  std::vector<int> y;
  make_blobs(rng, 80, 3, X, y);
  ForestParams params = rf_defaults();
  params.n_trees = 16;
  params.seed = 1234;
  const Forest forest = fit_forest(X, y, params);
  const auto proba = forest.predict_proba(X);
  // Frozen after the first implementation run; byte-stable contract.
  const std::vector<double> expected_head = {
      0.1875, 0.875, 0.0625, 0.5, 1.0, 0.0, 0.0, 0.0,
  };
  REQUIRE(proba.size() == 80);
  for (std::size_t i = 0; i < expected_head.size(); ++i)
    CHECK(proba[i] == expected_head[i]);
}

TEST_CASE("importances: nonnegative, sum to one, duplicated column shares mass") {
  Rng rng(31);
  const std::size_t n = 300;
  Matrix X(n, 3);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(rng.next_below(2));
    X(i, 0) = rng.next_normal() + (y[i] == 1 ? 1.8 : 0.0);
    X(i, 1) = rng.next_normal();
    X(i, 2) = rng.next_normal();
  }
  ForestParams params = rf_defaults();
  params.n_trees = 60;
  params.max_features = ForestParams::MaxFeatures::all;
  params.seed = 8;
  const Forest base = fit_forest(X, y, params);
  const double base_sum =
      std::accumulate(base.importances.begin(), base.importances.end(), 0.0);
  CHECK(std::abs(base_sum - 1.0) <= 1e-9);
  for (const double v : base.importances) CHECK(v >= 0.0);

  // Duplicate the informative column; the pair's mass stays comparable to the
  // original column's.
  Matrix X2(n, 4);
  for (std::size_t i = 0; i < n; ++i) {
    X2(i, 0) = X(i, 0);
    X2(i, 1) = X(i, 1);
    X2(i, 2) = X(i, 2);
    X2(i, 3) = X(i, 0);
  }
  const Forest dup = fit_forest(X2, y, params);
  const double pair_mass = dup.importances[0] + dup.importances[3];
  CHECK(std::abs(pair_mass - base.importances[0]) <= 0.1);
  CHECK(dup.importances[0] >= 0.0);
  CHECK(dup.importances[3] >= 0.0);
}

TEST_CASE("stump forest on the 1-D example concentrates importance") {
  const Matrix X = from_rows({{-2}, {-1}, {1}, {2}});
  const std::vector<int> y = {0, 0, 1, 1};
  ForestParams params = rf_defaults();
  params.n_trees = 10;
  params.max_depth = 1;
  params.seed = 2;
  const Forest forest = fit_forest(X, y, params);
  CHECK(forest.importances == std::vector<double>{1.0});
}

TEST_CASE("permutation sanity: a shuffled copy never helps") {
  Rng seed_rng(61);
  double base_err_total = 0.0, aug_err_total = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(seed_rng.next_u64());
    const std::size_t n = 150;
    Matrix X(n, 2);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.next_below(2));
      X(i, 0) = rng.next_normal() + (y[i] == 1 ? 1.2 : 0.0);
      X(i, 1) = rng.next_normal();
    }
    ForestParams params = rf_defaults();
    params.n_trees = 40;
    params.seed = rng.next_u64();
    const Forest base = fit_forest(X, y, params);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm, rng);
    Matrix X3(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      X3(i, 0) = X(i, 0);
      X3(i, 1) = X(i, 1);
      X3(i, 2) = X(perm[i], 0);  // label-independent permuted copy
    }
    const Forest aug = fit_forest(X3, y, params);
    base_err_total += 1.0 - training_accuracy(base, X, y);
    aug_err_total += 1.0 - training_accuracy(aug, X3, y);
  }
  CHECK(aug_err_total / 10.0 <= base_err_total / 10.0 + 0.02);
}

TEST_CASE("error paths: bad input shapes and values") {
  ForestParams params = rf_defaults();
  CHECK_THROWS_AS(fit_forest(Matrix(0, 0), {}, params), DataError);
  Matrix bad(2, 1);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_forest(bad, {0, 1}, params), DataError);
  CHECK_THROWS_AS(fit_forest(Matrix(2, 1), {0}, params), DataError);

  const Matrix X = from_rows({{-1}, {1}});
  const Forest forest = fit_forest(X, {0, 1}, params);
  CHECK_THROWS_AS(forest.predict_proba(Matrix(1, 2)), DataError);

  ForestParams invalid = rf_defaults();
  invalid.n_trees = 0;
  CHECK_THROWS_AS(fit_forest(X, {0, 1}, invalid), ConfigError);
}
