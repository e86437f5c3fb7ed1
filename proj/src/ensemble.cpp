#include "batchqc/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "batchqc/rng.hpp"

namespace batchqc {

void ForestParams::validate() const {
  if (n_trees < 1) throw ConfigError("forest: n_trees must be >= 1");
  if (max_depth < 0) throw ConfigError("forest: max_depth must be >= 0");
  if (min_samples_leaf < 1) throw ConfigError("forest: min_samples_leaf must be >= 1");
  if (max_features == MaxFeatures::fraction &&
      (max_features_fraction <= 0.0 || max_features_fraction > 1.0))
    throw ConfigError("forest: max_features fraction must be in (0,1]");
}

ForestParams rf_defaults() {
  ForestParams p;
  p.split_mode = SplitMode::rf_best_split;
  p.bootstrap = true;
  return p;
}

ForestParams extra_trees_defaults() {
  ForestParams p;
  p.split_mode = SplitMode::extra_random_split;
  p.bootstrap = false;
  return p;
}

const std::vector<double>& Tree::leaf_for(std::span<const double> x) const {
  int node = 0;
  while (nodes[node].feature >= 0) {
    node = x[static_cast<std::size_t>(nodes[node].feature)] <= nodes[node].threshold
               ? nodes[node].left
               : nodes[node].right;
  }
  return nodes[node].leaf_freqs;
}

namespace {

struct SplitChoice {
  bool valid = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;  // weighted Gini decrease, not yet scaled by node share
};

double gini(const std::vector<double>& class_weight_sums, double total) {
  if (total <= 0.0) return 0.0;
  double sum_sq = 0.0;
  for (const double w : class_weight_sums) {
    const double p = w / total;
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

bool better_than(const SplitChoice& a, const SplitChoice& b) {
  // Ties in gain resolve to the lowest feature index, then lowest threshold,
  // making tree growth fully deterministic.
  if (!b.valid) return a.valid;
  if (a.gain != b.gain) return a.gain > b.gain;
  if (a.feature != b.feature) return a.feature < b.feature;
  return a.threshold < b.threshold;
}

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, const std::vector<int>& y,
              const std::vector<double>& sample_weight, const ForestParams& params,
              int n_classes, std::size_t n_candidates)
      : X_(X),
        y_(y),
        weight_(sample_weight),
        params_(params),
        n_classes_(n_classes),
        n_candidates_(n_candidates) {}

  // importance_out accumulates weighted impurity decreases per feature.
  Tree build(std::vector<std::size_t> indices, Rng& rng,
             std::vector<double>& importance_out) {
    Tree tree;
    indices_ = std::move(indices);
    root_weight_ = 0.0;
    for (const std::size_t i : indices_) root_weight_ += weight_[i];

    struct WorkItem {
      int node_id;
      std::size_t begin, end;
      int depth;
    };
    std::vector<WorkItem> stack;
    tree.nodes.emplace_back();
    stack.push_back({0, 0, indices_.size(), 0});

    while (!stack.empty()) {
      const WorkItem item = stack.back();
      stack.pop_back();

      std::vector<double> counts(n_classes_, 0.0);
      double node_weight = 0.0;
      for (std::size_t p = item.begin; p < item.end; ++p) {
        counts[static_cast<std::size_t>(y_[indices_[p]])] += weight_[indices_[p]];
        node_weight += weight_[indices_[p]];
      }

      const std::size_t n_node = item.end - item.begin;
      const bool pure = std::count_if(counts.begin(), counts.end(),
                                      [](double c) { return c > 0.0; }) <= 1;
      const bool depth_capped = params_.max_depth > 0 && item.depth >= params_.max_depth;
      SplitChoice split;
      if (!pure && !depth_capped &&
          n_node >= 2 * static_cast<std::size_t>(params_.min_samples_leaf)) {
        split = find_split(item.begin, item.end, counts, node_weight, rng);
      }

      TreeNode& node = tree.nodes[static_cast<std::size_t>(item.node_id)];
      if (!split.valid) {
        node.leaf_freqs.resize(static_cast<std::size_t>(n_classes_));
        for (std::size_t c = 0; c < counts.size(); ++c)
          node.leaf_freqs[c] = node_weight > 0.0 ? counts[c] / node_weight : 0.0;
        continue;
      }

      importance_out[static_cast<std::size_t>(split.feature)] +=
          (node_weight / root_weight_) * split.gain;

      const std::size_t mid = static_cast<std::size_t>(
          std::partition(indices_.begin() + static_cast<std::ptrdiff_t>(item.begin),
                         indices_.begin() + static_cast<std::ptrdiff_t>(item.end),
                         [&](std::size_t i) {
                           return X_(i, static_cast<std::size_t>(split.feature)) <=
                                  split.threshold;
                         }) -
          indices_.begin());

      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = static_cast<int>(tree.nodes.size());
      node.right = node.left + 1;
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      const int left = tree.nodes[static_cast<std::size_t>(item.node_id)].left;
      const int right = tree.nodes[static_cast<std::size_t>(item.node_id)].right;
      stack.push_back({right, mid, item.end, item.depth + 1});
      stack.push_back({left, item.begin, mid, item.depth + 1});
    }
    return tree;
  }

 private:
  SplitChoice find_split(std::size_t begin, std::size_t end,
                         const std::vector<double>& node_counts, double node_weight,
                         Rng& rng) {
    std::vector<std::size_t> candidates =
        sample_without_replacement(X_.cols(), n_candidates_, rng);
    std::sort(candidates.begin(), candidates.end());

    const double node_gini = gini(node_counts, node_weight);
    SplitChoice best;
    for (const std::size_t f : candidates) {
      const SplitChoice cand =
          params_.split_mode == SplitMode::rf_best_split
              ? best_threshold(f, begin, end, node_counts, node_weight, node_gini)
              : random_threshold(f, begin, end, node_counts, node_weight, node_gini, rng);
      if (better_than(cand, best)) best = cand;
    }
    return best;
  }

  // Exhaustive midpoint search on one feature (classic random-forest rule).
  SplitChoice best_threshold(std::size_t feature, std::size_t begin, std::size_t end,
                             const std::vector<double>& node_counts, double node_weight,
                             double node_gini) {
    const std::size_t n = end - begin;
    sorted_.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t i = indices_[begin + p];
      sorted_[p] = {X_(i, feature), weight_[i], y_[i]};
    }
    std::sort(sorted_.begin(), sorted_.end(),
              [](const Entry& a, const Entry& b) { return a.value < b.value; });

    std::vector<double> left_counts(static_cast<std::size_t>(n_classes_), 0.0);
    double left_weight = 0.0;
    const std::size_t min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
    SplitChoice best;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      left_counts[static_cast<std::size_t>(sorted_[p].label)] += sorted_[p].weight;
      left_weight += sorted_[p].weight;
      if (sorted_[p].value == sorted_[p + 1].value) continue;
      if (p + 1 < min_leaf || n - p - 1 < min_leaf) continue;

      const double right_weight = node_weight - left_weight;
      double right_gini_sum = 0.0;
      for (std::size_t c = 0; c < left_counts.size(); ++c) {
        const double rc = node_counts[c] - left_counts[c];
        right_gini_sum += (rc / right_weight) * (rc / right_weight);
      }
      const double gain = node_gini -
                          (left_weight / node_weight) * gini(left_counts, left_weight) -
                          (right_weight / node_weight) * (1.0 - right_gini_sum);
      SplitChoice cand{true, static_cast<int>(feature),
                       sorted_[p].value + 0.5 * (sorted_[p + 1].value - sorted_[p].value),
                       gain};
      if (better_than(cand, best)) best = cand;
    }
    return best;
  }

  // One uniform threshold in the node-local range (extremely randomized rule).
  SplitChoice random_threshold(std::size_t feature, std::size_t begin, std::size_t end,
                               const std::vector<double>& node_counts, double node_weight,
                               double node_gini, Rng& rng) {
    double lo = X_(indices_[begin], feature);
    double hi = lo;
    for (std::size_t p = begin + 1; p < end; ++p) {
      const double v = X_(indices_[p], feature);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (lo == hi) return {};
    const double threshold = lo + rng.next_double() * (hi - lo);

    std::vector<double> left_counts(static_cast<std::size_t>(n_classes_), 0.0);
    double left_weight = 0.0;
    std::size_t n_left = 0;
    for (std::size_t p = begin; p < end; ++p) {
      const std::size_t i = indices_[p];
      if (X_(i, feature) <= threshold) {
        left_counts[static_cast<std::size_t>(y_[i])] += weight_[i];
        left_weight += weight_[i];
        ++n_left;
      }
    }
    const std::size_t n_right = end - begin - n_left;
    const std::size_t min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
    if (n_left < min_leaf || n_right < min_leaf) return {};

    std::vector<double> right_counts(left_counts.size());
    for (std::size_t c = 0; c < left_counts.size(); ++c)
      right_counts[c] = node_counts[c] - left_counts[c];
    const double right_weight = node_weight - left_weight;
    const double gain = node_gini -
                        (left_weight / node_weight) * gini(left_counts, left_weight) -
                        (right_weight / node_weight) * gini(right_counts, right_weight);
    return {true, static_cast<int>(feature), threshold, gain};
  }

  struct Entry {
    double value;
    double weight;
    int label;
  };

  const Matrix& X_;
  const std::vector<int>& y_;
  const std::vector<double>& weight_;
  const ForestParams& params_;
  int n_classes_;
  std::size_t n_candidates_;
  std::vector<std::size_t> indices_;
  std::vector<Entry> sorted_;
  double root_weight_ = 0.0;
};

std::size_t candidate_count(const ForestParams& params, std::size_t n_features) {
  switch (params.max_features) {
    case ForestParams::MaxFeatures::sqrt_total:
      return std::max<std::size_t>(
          1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n_features)))));
    case ForestParams::MaxFeatures::fraction:
      return std::max<std::size_t>(
          1, static_cast<std::size_t>(
                 std::floor(params.max_features_fraction * static_cast<double>(n_features))));
    case ForestParams::MaxFeatures::all:
      return n_features;
  }
  return n_features;
}

}  // namespace

Forest fit_forest(const Matrix& X, const std::vector<int>& y, const ForestParams& params,
                  int n_classes, int workers) {
  params.validate();
  if (X.rows() == 0 || X.cols() == 0) throw DataError("fit_forest: empty matrix");
  if (y.size() != X.rows()) throw DataError("fit_forest: labels/rows mismatch");
  for (const double v : X.data())
    if (!std::isfinite(v)) throw DataError("fit_forest: non-finite input");
  int max_label = 0;
  for (const int label : y) {
    if (label < 0) throw DataError("fit_forest: negative class label");
    max_label = std::max(max_label, label);
  }
  if (n_classes == 0) n_classes = std::max(2, max_label + 1);
  if (max_label >= n_classes) throw DataError("fit_forest: label out of range");

  // balanced: weight n / (k * count(class)); absent classes keep weight 0.
  std::vector<double> class_weight(static_cast<std::size_t>(n_classes), 1.0);
  if (params.class_weight == ForestParams::ClassWeight::balanced) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
    for (const int label : y) ++counts[static_cast<std::size_t>(label)];
    for (std::size_t c = 0; c < counts.size(); ++c)
      class_weight[c] = counts[c] > 0
                            ? static_cast<double>(y.size()) /
                                  (static_cast<double>(n_classes) * static_cast<double>(counts[c]))
                            : 0.0;
  }
  std::vector<double> sample_weight(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    sample_weight[i] = class_weight[static_cast<std::size_t>(y[i])];

  Forest forest;
  forest.params = params;
  forest.n_classes = n_classes;
  forest.n_features = X.cols();
  forest.trees.resize(static_cast<std::size_t>(params.n_trees));

  const std::size_t n_candidates = candidate_count(params, X.cols());
  std::vector<std::vector<double>> tree_importances(
      static_cast<std::size_t>(params.n_trees), std::vector<double>(X.cols(), 0.0));

  parallel_for(static_cast<std::size_t>(params.n_trees), workers, [&](std::size_t t) {
    Rng rng(mix(params.seed, t));
    std::vector<std::size_t> indices;
    indices.reserve(X.rows());
    if (params.bootstrap) {
      for (std::size_t i = 0; i < X.rows(); ++i)
        indices.push_back(static_cast<std::size_t>(rng.next_below(X.rows())));
    } else {
      for (std::size_t i = 0; i < X.rows(); ++i) indices.push_back(i);
    }
    TreeBuilder builder(X, y, sample_weight, params, n_classes, n_candidates);
    forest.trees[t] = builder.build(std::move(indices), rng, tree_importances[t]);
  });

  forest.importances.assign(X.cols(), 0.0);
  for (const auto& imp : tree_importances)
    for (std::size_t f = 0; f < imp.size(); ++f) forest.importances[f] += imp[f];
  const double total =
      std::accumulate(forest.importances.begin(), forest.importances.end(), 0.0);
  if (total > 0.0)
    for (double& v : forest.importances) v /= total;
  return forest;
}

std::vector<std::vector<double>> Forest::predict_dist(const Matrix& X, int workers) const {
  if (X.cols() != n_features)
    throw DataError("predict: expected " + std::to_string(n_features) + " features, got " +
                    std::to_string(X.cols()));
  std::vector<std::vector<double>> out(X.rows());
  parallel_for(X.rows(), workers, [&](std::size_t i) {
    std::vector<double> acc(static_cast<std::size_t>(n_classes), 0.0);
    for (const Tree& tree : trees) {
      const auto& freqs = tree.leaf_for(X.row(i));
      for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += freqs[c];
    }
    for (double& v : acc) v /= static_cast<double>(trees.size());
    out[i] = std::move(acc);
  });
  return out;
}

std::vector<double> Forest::predict_proba(const Matrix& X, int workers) const {
  const auto dist = predict_dist(X, workers);
  std::vector<double> out(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i) out[i] = dist[i][1];
  return out;
}

std::vector<int> Forest::predict_class(const Matrix& X, int workers) const {
  const auto dist = predict_dist(X, workers);
  std::vector<int> out(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < dist[i].size(); ++c)
      if (dist[i][c] > dist[i][best]) best = c;
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace batchqc
