#include "batchqc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace batchqc {

namespace {

void check_scored(const ScoredLabels& data) {
  if (data.scores.size() != data.labels.size())
    throw DataError("scores and labels differ in length");
  if (data.scores.empty()) throw DataError("empty score vector");
  for (const double s : data.scores)
    if (!std::isfinite(s)) throw DataError("non-finite score");
}

}  // namespace

double roc_auc(const ScoredLabels& data) {
  check_scored(data);
  const std::size_t n = data.scores.size();
  std::size_t n_pos = 0;
  for (const int l : data.labels) n_pos += (l == 1);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DataError("roc_auc undefined: only one class present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return data.scores[a] < data.scores[b]; });

  // Midranks over tie groups, then the Mann-Whitney identity.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && data.scores[order[j]] == data.scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k)
      if (data.labels[order[k]] == 1) rank_sum_pos += midrank;
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                      static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

ThresholdPoint optimal_threshold(const ScoredLabels& data) {
  check_scored(data);
  std::size_t n_pos = 0;
  for (const int l : data.labels) n_pos += (l == 1);
  const std::size_t n_neg = data.labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DataError("optimal_threshold undefined: only one class present");

  std::vector<std::size_t> order(data.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return data.scores[a] > data.scores[b]; });

  const ThresholdPoint sentinel{data.scores[order.front()] + 1.0, 0.0, 0.0};
  std::vector<ThresholdPoint> candidates{sentinel};
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double threshold = data.scores[order[i]];
    while (i < order.size() && data.scores[order[i]] == threshold) {
      if (data.labels[order[i]] == 1)
        ++tp;
      else
        ++fp;
      ++i;
    }
    candidates.push_back({threshold, static_cast<double>(tp) / static_cast<double>(n_pos),
                          static_cast<double>(fp) / static_cast<double>(n_neg)});
  }

  double max_j = 0.0;
  for (const auto& c : candidates) max_j = std::max(max_j, c.youden());
  // No candidate beats chance: the scores carry no usable signal, so report
  // the classify-none sentinel rather than the degenerate classify-all point.
  if (max_j <= 0.0) return sentinel;

  ThresholdPoint best = sentinel;
  bool have = false;
  for (const auto& c : candidates) {
    if (c.youden() != max_j) continue;
    if (!have || c.tpr > best.tpr || (c.tpr == best.tpr && c.threshold < best.threshold)) {
      best = c;
      have = true;
    }
  }
  return best;
}

double wasserstein_1d(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw DataError("wasserstein_1d: empty sample");
  std::vector<double> sa = a, sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double step_a = 1.0 / static_cast<double>(sa.size());
  const double step_b = 1.0 / static_cast<double>(sb.size());

  double total = 0.0;
  double cdf_a = 0.0, cdf_b = 0.0;
  std::size_t ia = 0, ib = 0;
  double prev = std::min(sa[0], sb[0]);
  while (ia < sa.size() || ib < sb.size()) {
    double x;
    if (ib >= sb.size() || (ia < sa.size() && sa[ia] <= sb[ib]))
      x = sa[ia];
    else
      x = sb[ib];
    total += std::abs(cdf_a - cdf_b) * (x - prev);
    while (ia < sa.size() && sa[ia] == x) {
      cdf_a += step_a;
      ++ia;
    }
    while (ib < sb.size() && sb[ib] == x) {
      cdf_b += step_b;
      ++ib;
    }
    prev = x;
  }
  return total;
}

WassersteinMatrix pairwise_wasserstein(
    const std::map<std::string, std::vector<double>>& groups, int workers) {
  if (groups.size() < 2) throw DataError("pairwise_wasserstein: need at least 2 groups");
  WassersteinMatrix out;
  std::vector<const std::vector<double>*> samples;
  for (const auto& [id, sample] : groups) {
    if (sample.empty()) throw DataError("pairwise_wasserstein: group '" + id + "' is empty");
    out.ids.push_back(id);
    samples.push_back(&sample);
  }
  const std::size_t g = out.ids.size();
  out.dist = Matrix(g, g);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = i + 1; j < g; ++j) pairs.emplace_back(i, j);
  parallel_for(pairs.size(), workers, [&](std::size_t p) {
    const auto [i, j] = pairs[p];
    const double d = wasserstein_1d(*samples[i], *samples[j]);
    out.dist(i, j) = d;
    out.dist(j, i) = d;
  });

  double sum = 0.0;
  for (const auto& [i, j] : pairs) sum += out.dist(i, j);
  out.mean = sum / static_cast<double>(pairs.size());
  double ss = 0.0;
  for (const auto& [i, j] : pairs) {
    const double d = out.dist(i, j) - out.mean;
    ss += d * d;
  }
  out.stddev = std::sqrt(ss / static_cast<double>(pairs.size()));
  return out;
}

}  // namespace batchqc
