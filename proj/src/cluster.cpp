#include "batchqc/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "batchqc/rng.hpp"

namespace batchqc {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

double entropy(const std::vector<double>& counts, double total) {
  double h = 0.0;
  for (const double c : counts) {
    if (c <= 0.0) continue;
    const double p = c / total;
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace

std::vector<int> kmeans(const Matrix& X, const KMeansConfig& cfg, std::uint64_t run_seed,
                        double* final_inertia) {
  const std::size_t n = X.rows();
  const std::size_t k = static_cast<std::size_t>(cfg.k);
  if (cfg.k < 1) throw ConfigError("kmeans: k must be >= 1");
  if (k > n) throw DataError("kmeans: k > number of samples");
  for (const double v : X.data())
    if (!std::isfinite(v)) throw DataError("kmeans: non-finite input");

  Rng rng(run_seed);
  Matrix centroids(k, X.cols());
  for (std::size_t c = 0; const std::size_t i : sample_without_replacement(n, k, rng)) {
    std::copy(X.row(i).begin(), X.row(i).end(), centroids.row(c).begin());
    ++c;
  }

  std::vector<int> assignment(n, 0);
  std::vector<double> dist_to_centroid(n, 0.0);
  double prev_inertia = std::numeric_limits<double>::infinity();
  double inertia = prev_inertia;

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = sq_dist(X.row(i), centroids.row(0));
      int best_c = 0;
      for (std::size_t c = 1; c < k; ++c) {
        const double d = sq_dist(X.row(i), centroids.row(c));
        if (d < best) {
          best = d;
          best_c = static_cast<int>(c);
        }
      }
      assignment[i] = best_c;
      dist_to_centroid[i] = best;
      inertia += best;
    }

    // Reseed any emptied cluster to the point farthest from its assigned
    // centroid, never stealing the last point of another cluster.
    std::vector<std::size_t> counts(k, 0);
    for (const int a : assignment) ++counts[static_cast<std::size_t>(a)];
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      std::size_t farthest = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(assignment[i])] < 2) continue;
        if (farthest == n || dist_to_centroid[i] > dist_to_centroid[farthest]) farthest = i;
      }
      if (farthest == n) break;  // k == n and all singletons; nothing to move
      --counts[static_cast<std::size_t>(assignment[farthest])];
      assignment[farthest] = static_cast<int>(c);
      counts[c] = 1;
      dist_to_centroid[farthest] = 0.0;
    }

    Matrix sums(k, X.cols());
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = static_cast<std::size_t>(assignment[i]);
      ++sizes[c];
      for (std::size_t j = 0; j < X.cols(); ++j) sums(c, j) += X(i, j);
    }
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t j = 0; j < X.cols(); ++j)
        centroids(c, j) = sums(c, j) / static_cast<double>(sizes[c]);

    if (std::isfinite(prev_inertia)) {
      const double change = prev_inertia - inertia;
      if (change <= cfg.rel_tolerance * std::max(prev_inertia, 1e-300)) break;
    }
    prev_inertia = inertia;
  }

  if (final_inertia) {
    // Report inertia of the final assignment against the final centroids.
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      total += sq_dist(X.row(i), centroids.row(static_cast<std::size_t>(assignment[i])));
    *final_inertia = total;
  }
  return assignment;
}

std::pair<double, double> homogeneity_completeness(const std::vector<int>& class_labels,
                                                   const std::vector<int>& cluster_labels) {
  if (class_labels.size() != cluster_labels.size() || class_labels.empty())
    throw DataError("homogeneity_completeness: label vectors empty or mismatched");

  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> class_counts, cluster_counts;
  for (std::size_t i = 0; i < class_labels.size(); ++i) {
    joint[{class_labels[i], cluster_labels[i]}] += 1.0;
    class_counts[class_labels[i]] += 1.0;
    cluster_counts[cluster_labels[i]] += 1.0;
  }
  const double n = static_cast<double>(class_labels.size());

  std::vector<double> cc, kc;
  for (const auto& [label, count] : class_counts) cc.push_back(count);
  for (const auto& [label, count] : cluster_counts) kc.push_back(count);
  const double h_class = entropy(cc, n);
  const double h_cluster = entropy(kc, n);

  double h_class_given_cluster = 0.0;
  double h_cluster_given_class = 0.0;
  for (const auto& [pair, count] : joint) {
    const auto& [cls, clu] = pair;
    const double p = count / n;
    h_class_given_cluster -= p * std::log(count / cluster_counts[clu]);
    h_cluster_given_class -= p * std::log(count / class_counts[cls]);
  }

  const double h = h_class > 0.0 ? 1.0 - h_class_given_cluster / h_class : 1.0;
  const double c = h_cluster > 0.0 ? 1.0 - h_cluster_given_class / h_cluster : 1.0;
  return {h, c};
}

ClusteringScore batch_effect_score(const FeatureTable& table, GroupBy group_by,
                                   const KMeansConfig& cfg, int workers) {
  const auto groups =
      group_by == GroupBy::site ? table.rows_by_site() : table.rows_by_study();
  if (groups.size() < 2) throw DataError("batch_effect_score: need at least 2 groups");
  if (cfg.n_runs < 1) throw ConfigError("batch_effect_score: n_runs must be >= 1");

  std::vector<int> group_labels(table.size());
  {
    int g = 0;
    for (const auto& [name, rows] : groups) {
      for (const std::size_t r : rows) group_labels[r] = g;
      ++g;
    }
  }

  Matrix X = table.feature_matrix();
  if (cfg.standardize) {
    for (std::size_t j = 0; j < X.cols(); ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < X.rows(); ++i) mean += X(i, j);
      mean /= static_cast<double>(X.rows());
      double var = 0.0;
      for (std::size_t i = 0; i < X.rows(); ++i) {
        const double d = X(i, j) - mean;
        var += d * d;
      }
      var /= static_cast<double>(X.rows());
      const double sd = std::sqrt(var);
      for (std::size_t i = 0; i < X.rows(); ++i)
        X(i, j) = sd > 0.0 ? (X(i, j) - mean) / sd : 0.0;
    }
  }

  KMeansConfig run_cfg = cfg;
  run_cfg.k = static_cast<int>(groups.size());
  if (static_cast<std::size_t>(run_cfg.k) > table.size())
    throw DataError("batch_effect_score: more groups than samples");

  std::vector<double> hs(static_cast<std::size_t>(cfg.n_runs));
  std::vector<double> cs(static_cast<std::size_t>(cfg.n_runs));
  parallel_for(static_cast<std::size_t>(cfg.n_runs), workers, [&](std::size_t run) {
    const auto assignment = kmeans(X, run_cfg, mix(cfg.seed, run));
    const auto [h, c] = homogeneity_completeness(group_labels, assignment);
    hs[run] = h;
    cs[run] = c;
  });

  const auto mean_std = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (const double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return std::make_pair(mean, std::sqrt(var));
  };
  ClusteringScore score;
  score.k = run_cfg.k;
  score.n_runs = cfg.n_runs;
  std::tie(score.homogeneity_mean, score.homogeneity_std) = mean_std(hs);
  std::tie(score.completeness_mean, score.completeness_std) = mean_std(cs);
  return score;
}

}  // namespace batchqc
