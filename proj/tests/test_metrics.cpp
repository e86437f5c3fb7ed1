#include "batchqc/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "batchqc/rng.hpp"

using namespace batchqc;

namespace {

// Independent oracle: count correctly ordered positive/negative pairs, ties
// worth one half.
double auc_pair_counting(const ScoredLabels& data) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < data.scores.size(); ++i) {
    if (data.labels[i] != 1) continue;
    for (std::size_t j = 0; j < data.scores.size(); ++j) {
      if (data.labels[j] != 0) continue;
      ++pairs;
      if (data.scores[i] > data.scores[j])
        wins += 1.0;
      else if (data.scores[i] == data.scores[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

ScoredLabels random_instance(Rng& rng, std::size_t max_n, bool inject_ties) {
  ScoredLabels data;
  const std::size_t n = 2 + rng.next_below(max_n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    double score = rng.next_double();
    if (inject_ties && rng.next_below(3) == 0)
      score = std::floor(score * 4.0) / 4.0;  // heavy tie mass on quarter values
    data.scores.push_back(score);
    data.labels.push_back(static_cast<int>(rng.next_below(2)));
  }
  // Guarantee both classes.
  data.labels[0] = 0;
  data.labels[n - 1] = 1;
  return data;
}

}  // namespace

TEST_CASE("roc_auc: perfect separation") {
  CHECK(roc_auc({{0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}}) == doctest::Approx(1.0));
}

TEST_CASE("roc_auc: total ties give one half") {
  CHECK(roc_auc({{0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}}) == doctest::Approx(0.5));
}

TEST_CASE("roc_auc: half of the pairs correctly ordered") {
  // 2 of 4 positive-negative pairs correctly ordered.
  CHECK(roc_auc({{0.8, 0.4, 0.6, 0.2}, {1, 0, 0, 1}}) == doctest::Approx(0.5));
}

TEST_CASE("roc_auc: single class is an error") {
  CHECK_THROWS_AS(roc_auc({{0.1, 0.2}, {1, 1}}), DataError);
  CHECK_THROWS_AS(roc_auc({{0.1, 0.2}, {0, 0}}), DataError);
}

TEST_CASE("roc_auc matches the pair-counting oracle") {
  Rng rng(20240801);
  for (int t = 0; t < 200; ++t) {
    const ScoredLabels data = random_instance(rng, 50, true);
    CHECK(std::abs(roc_auc(data) - auc_pair_counting(data)) <= 1e-12);
  }
}

TEST_CASE("roc_auc: invariant under strictly increasing transforms") {
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    ScoredLabels data = random_instance(rng, 30, true);
    const double base = roc_auc(data);
    ScoredLabels warped = data;
    for (double& s : warped.scores) s = std::exp(3.0 * s) - 1.0;
    CHECK(roc_auc(warped) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("roc_auc: complement symmetry") {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    ScoredLabels data = random_instance(rng, 30, true);
    ScoredLabels flipped = data;
    for (int& l : flipped.labels) l = 1 - l;
    CHECK(roc_auc(data) + roc_auc(flipped) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("optimal_threshold: clean separation point") {
  const auto point = optimal_threshold({{0.9, 0.8, 0.4, 0.3, 0.2}, {1, 1, 1, 0, 0}});
  CHECK(point.threshold == doctest::Approx(0.4));
  CHECK(point.tpr == doctest::Approx(1.0));
  CHECK(point.fpr == doctest::Approx(0.0));
  CHECK(point.youden() == doctest::Approx(1.0));
}

TEST_CASE("optimal_threshold: J tie resolves to the higher tpr") {
  // J = 0.5 at both 0.9 and 0.6; 0.6 has tpr 1.
  const auto point = optimal_threshold({{0.9, 0.7, 0.6, 0.3}, {1, 0, 1, 0}});
  CHECK(point.threshold == doctest::Approx(0.6));
  CHECK(point.tpr == doctest::Approx(1.0));
  CHECK(point.fpr == doctest::Approx(0.5));
}

TEST_CASE("optimal_threshold: inverted scores fall back to the sentinel") {
  const auto point = optimal_threshold({{0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}});
  CHECK(point.threshold > 0.9);
  CHECK(point.tpr == doctest::Approx(0.0));
  CHECK(point.fpr == doctest::Approx(0.0));
}

TEST_CASE("optimal_threshold: J equals a dense sweep oracle") {
  Rng rng(31337);
  for (int t = 0; t < 50; ++t) {
    const ScoredLabels data = random_instance(rng, 40, true);
    const auto point = optimal_threshold(data);

    double n_pos = 0, n_neg = 0;
    for (const int l : data.labels) (l == 1 ? n_pos : n_neg) += 1.0;
    const double lo = *std::min_element(data.scores.begin(), data.scores.end()) - 0.1;
    const double hi = *std::max_element(data.scores.begin(), data.scores.end()) + 0.1;
    double best_j = 0.0;
    for (int g = 0; g <= 10000; ++g) {
      const double thr = lo + (hi - lo) * g / 10000.0;
      double tp = 0, fp = 0;
      for (std::size_t i = 0; i < data.scores.size(); ++i) {
        if (data.scores[i] >= thr) (data.labels[i] == 1 ? tp : fp) += 1.0;
      }
      best_j = std::max(best_j, tp / n_pos - fp / n_neg);
    }
    // tpr/fpr only change at observed scores, so the candidates are exhaustive
    // and the maxima agree exactly.
    CHECK(point.youden() == best_j);
  }
}

TEST_CASE("wasserstein_1d: identity, point masses, interleaved CDFs") {
  CHECK(wasserstein_1d({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == doctest::Approx(0.0));
  CHECK(wasserstein_1d({0.0}, {1.0}) == doctest::Approx(1.0));
  // |0.5 - 0| * 0.5 + |0.5 - 1| * 0.5
  CHECK(wasserstein_1d({0.0, 1.0}, {0.5}) == doctest::Approx(0.5));
}

TEST_CASE("wasserstein_1d: equal sizes reduce to mean |sorted difference|") {
  Rng rng(99);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.next_below(40);
    std::vector<double> a(n), b(n);
    for (double& v : a) v = rng.next_normal();
    for (double& v : b) v = rng.next_normal() + 0.5;
    std::vector<double> sa = a, sb = b;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    double oracle = 0.0;
    for (std::size_t i = 0; i < n; ++i) oracle += std::abs(sa[i] - sb[i]);
    oracle /= static_cast<double>(n);
    CHECK(std::abs(wasserstein_1d(a, b) - oracle) <= 1e-12);
  }
}

TEST_CASE("wasserstein_1d: metric axioms and translation equivariance") {
  Rng rng(123);
  for (int t = 0; t < 100; ++t) {
    const auto draw = [&](double shift) {
      std::vector<double> v(1 + rng.next_below(20));
      for (double& x : v) x = rng.next_normal() + shift;
      return v;
    };
    const auto a = draw(0.0), b = draw(0.3), c = draw(-0.4);
    const double ab = wasserstein_1d(a, b);
    const double ba = wasserstein_1d(b, a);
    const double ac = wasserstein_1d(a, c);
    const double cb = wasserstein_1d(c, b);
    CHECK(ab >= 0.0);
    CHECK(std::abs(ab - ba) <= 1e-12);
    CHECK(wasserstein_1d(a, a) == doctest::Approx(0.0));
    CHECK(ab <= ac + cb + 1e-9);

    auto a_shift = a, b_shift = b;
    for (double& x : a_shift) x += 2.5;
    for (double& x : b_shift) x += 2.5;
    CHECK(wasserstein_1d(a_shift, b_shift) == doctest::Approx(ab).epsilon(1e-9));
  }
}

TEST_CASE("pairwise_wasserstein: identical groups and point masses") {
  const WassersteinMatrix zero =
      pairwise_wasserstein({{"a", {1.0, 2.0}}, {"b", {1.0, 2.0}}});
  CHECK(zero.mean == doctest::Approx(0.0));
  CHECK(zero.stddev == doctest::Approx(0.0));

  const WassersteinMatrix m =
      pairwise_wasserstein({{"a", {0.0}}, {"b", {1.0}}, {"c", {2.0}}});
  CHECK(m.dist(0, 1) == doctest::Approx(1.0));
  CHECK(m.dist(0, 2) == doctest::Approx(2.0));
  CHECK(m.dist(1, 2) == doctest::Approx(1.0));
  CHECK(m.mean == doctest::Approx(4.0 / 3.0));
  CHECK(m.stddev == doctest::Approx(std::sqrt(2.0) / 3.0));
}

TEST_CASE("pairwise_wasserstein: symmetric matrix, zero diagonal, worker-invariant") {
  Rng rng(5);
  std::map<std::string, std::vector<double>> groups;
  for (int g = 0; g < 5; ++g) {
    std::vector<double> v(10 + rng.next_below(20));
    for (double& x : v) x = rng.next_normal() + g * 0.2;
    groups["g" + std::to_string(g)] = v;
  }
  const auto m1 = pairwise_wasserstein(groups, 1);
  const auto m4 = pairwise_wasserstein(groups, 4);
  for (std::size_t i = 0; i < m1.ids.size(); ++i) {
    CHECK(m1.dist(i, i) == 0.0);
    for (std::size_t j = 0; j < m1.ids.size(); ++j) {
      CHECK(m1.dist(i, j) == m1.dist(j, i));
      CHECK(m1.dist(i, j) == m4.dist(i, j));
    }
  }
  CHECK_THROWS_AS(pairwise_wasserstein({{"only", {1.0}}}), DataError);
}
