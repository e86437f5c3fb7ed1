#pragma once

#include <cstdint>
#include <vector>

#include "batchqc/common.hpp"

namespace batchqc {

enum class SplitMode { rf_best_split, extra_random_split };

struct ForestParams {
  enum class MaxFeatures { sqrt_total, fraction, all };
  enum class ClassWeight { none, balanced };

  int n_trees = 100;
  int max_depth = 0;  // 0 = unlimited
  int min_samples_leaf = 1;
  MaxFeatures max_features = MaxFeatures::sqrt_total;
  double max_features_fraction = 1.0;  // used when max_features == fraction
  SplitMode split_mode = SplitMode::rf_best_split;
  bool bootstrap = true;
  ClassWeight class_weight = ClassWeight::balanced;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Canonical defaults for the two algorithm families: bootstrap on for the
/// random forest, off for extremely randomized trees.
ForestParams rf_defaults();
ForestParams extra_trees_defaults();

/// feature < 0 marks a leaf. Internal nodes route x[feature] <= threshold to
/// left, else right. Leaf frequency vectors are weighted class frequencies
/// summing to 1.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> leaf_freqs;
};

struct Tree {
  std::vector<TreeNode> nodes;
  const std::vector<double>& leaf_for(std::span<const double> x) const;
};

struct Forest {
  std::vector<Tree> trees;
  std::vector<double> importances;  // sums to 1 when any split occurred
  int n_classes = 2;
  std::size_t n_features = 0;
  ForestParams params;

  /// Mean leaf class-1 frequency over trees; binary convenience.
  std::vector<double> predict_proba(const Matrix& X, int workers = 1) const;
  /// Mean leaf frequency vector over trees, one per sample.
  std::vector<std::vector<double>> predict_dist(const Matrix& X, int workers = 1) const;
  /// argmax of predict_dist, ties to the lowest class index.
  std::vector<int> predict_class(const Matrix& X, int workers = 1) const;
};

/// Grows the ensemble. Per-tree RNG streams are derived from params.seed by
/// tree index, so the result is independent of the worker count. n_classes 0
/// means infer as max(y) + 1 (at least 2).
Forest fit_forest(const Matrix& X, const std::vector<int>& y, const ForestParams& params,
                  int n_classes = 0, int workers = 1);

}  // namespace batchqc
