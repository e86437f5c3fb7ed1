#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "batchqc/dataset.hpp"
#include "batchqc/ensemble.hpp"

namespace batchqc {

struct FtSitesConfig {
  double margin = 0.05;             // tolerated excess over chance accuracy
  double max_remove_fraction = 0.5; // cap on removed features
  double holdout_fraction = 0.25;   // stratified holdout used for the stop rule
  ForestParams forest = extra_trees_defaults();
  std::uint64_t seed = 0;

  void validate() const;
};

struct FtNoiseConfig {
  int n_iterations = 10;
  // 0 means "match the real feature count".
  int n_noise_features = 0;
  double snr_threshold = 1.0;
  double survival_fraction = 0.5;
  ForestParams forest = extra_trees_defaults();
  std::uint64_t seed = 0;

  void validate() const;
};

struct RemovedFeature {
  std::string name;
  // ft_sites: holdout balanced accuracy at the removal step.
  // ft_noise: number of iterations the feature survived.
  double diagnostic = 0.0;

  bool operator==(const RemovedFeature&) const = default;
};

struct SelectionResult {
  std::vector<std::string> kept;          // original schema order
  std::vector<RemovedFeature> removed;    // removal order
  std::vector<double> accuracy_trace;     // ft_sites: balanced accuracy per round
  bool noop = false;                      // single-site/undersized input, nothing done
  bool kept_guard_triggered = false;      // ft_noise: emptiness guard fired
};

/// Iteratively drops the feature most important to an extra-trees site
/// predictor while its holdout balanced accuracy stays above chance + margin.
/// Single-site or undersized tables come back untouched with noop set.
SelectionResult ft_sites(const FeatureTable& table, const FtSitesConfig& cfg,
                         int workers = 1);

/// Winnow-style filter: per iteration, permuted copies of randomly chosen
/// columns act as noise features; a real feature survives an iteration iff
/// its importance exceeds snr_threshold times the best noise importance.
/// Features surviving at least survival_fraction of the iterations are kept;
/// if none would be, the single feature with the highest mean importance is
/// kept and flagged.
SelectionResult ft_noise(const FeatureTable& table, const std::vector<int>& labels,
                         const FtNoiseConfig& cfg, int workers = 1);

}  // namespace batchqc
