#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "batchqc/common.hpp"
#include "batchqc/dataset.hpp"

namespace batchqc {

struct KMeansConfig {
  int k = 2;
  int max_iterations = 300;
  double rel_tolerance = 1e-6;
  int n_runs = 1000;
  // z-score features over the whole table before clustering (IQMs have wildly
  // different units and Lloyd's algorithm is scale-sensitive). Switchable off.
  bool standardize = true;
  std::uint64_t seed = 0;
};

/// One Lloyd run with Forgy initialization (k distinct points chosen
/// uniformly). Assignment ties go to the lowest cluster index; an emptied
/// cluster is reseeded to the point farthest from its assigned centroid.
/// Stops when the relative inertia change drops below rel_tolerance or at
/// max_iterations.
std::vector<int> kmeans(const Matrix& X, const KMeansConfig& cfg, std::uint64_t run_seed,
                        double* final_inertia = nullptr);

/// Rosenberg-Hirschberg scores from natural-log entropies of the empirical
/// joint distribution. Returns (homogeneity, completeness); the degenerate
/// conventions are h = 1 when H(C) = 0 and c = 1 when H(K) = 0.
std::pair<double, double> homogeneity_completeness(const std::vector<int>& class_labels,
                                                   const std::vector<int>& cluster_labels);

struct ClusteringScore {
  double completeness_mean = 0.0;
  double completeness_std = 0.0;
  double homogeneity_mean = 0.0;
  double homogeneity_std = 0.0;
  int k = 0;
  int n_runs = 0;
};

enum class GroupBy { site, study };

/// The repeated-K-means batch-effect probe: k = number of distinct groups,
/// n_runs independently seeded runs, mean/std of both scores against the
/// group partition.
ClusteringScore batch_effect_score(const FeatureTable& table, GroupBy group_by,
                                   const KMeansConfig& cfg, int workers = 1);

}  // namespace batchqc
