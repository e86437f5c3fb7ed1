#pragma once

#include <map>
#include <string>
#include <vector>

#include "batchqc/common.hpp"

namespace batchqc {

/// Scores with their binary labels; higher score = more artifacted,
/// label 1 = artifacted.
struct ScoredLabels {
  std::vector<double> scores;
  std::vector<int> labels;
};

/// Tie-aware ROC-AUC: P(score+ > score-) + 0.5 * P(score+ = score-), computed
/// exactly through midranks. Throws DataError when only one class is present.
double roc_auc(const ScoredLabels& data);

struct ThresholdPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double youden() const { return tpr - fpr; }
};

/// Youden-optimal threshold under the rule "score >= threshold -> positive".
/// Candidates are the distinct observed scores plus a classify-none sentinel
/// (max + 1). When no candidate beats J = 0 the sentinel is returned;
/// otherwise ties resolve to the higher tpr, then the lower threshold.
ThresholdPoint optimal_threshold(const ScoredLabels& data);

/// Exact 1-D Wasserstein distance between the empirical distributions:
/// integral of |F_a - F_b| over the merged support.
double wasserstein_1d(const std::vector<double>& a, const std::vector<double>& b);

struct WassersteinMatrix {
  std::vector<std::string> ids;  // sorted group ids, row/column order
  Matrix dist;
  double mean = 0.0;    // over the strict upper triangle
  double stddev = 0.0;  // population std over the strict upper triangle
};

WassersteinMatrix pairwise_wasserstein(
    const std::map<std::string, std::vector<double>>& groups, int workers = 1);

}  // namespace batchqc
