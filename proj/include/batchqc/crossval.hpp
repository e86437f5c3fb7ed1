#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "batchqc/dataset.hpp"
#include "batchqc/ensemble.hpp"
#include "batchqc/normalize.hpp"
#include "batchqc/select.hpp"

namespace batchqc {

struct SplitScheme {
  enum class Kind { loso, kfold, stratified_kfold };
  Kind kind = Kind::stratified_kfold;
  int k = 5;
  bool shuffled = true;  // kfold only
  std::uint64_t seed = 0;

  void validate() const;
};

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::string tag;  // site id for LoSo, "foldN" otherwise
};

/// LoSo: one fold per site (sorted site order). kfold: k near-equal folds
/// (sizes differ by at most 1). stratified_kfold: additionally keeps per-fold
/// class counts within +-1.
std::vector<Fold> make_splits(const FeatureTable& table, const SplitScheme& scheme);

/// One grid coordinate: which preprocessing steps run (in canonical order
/// center/scale -> ft_sites -> ft_noise) and the classifier settings.
struct PreprocFlags {
  bool center = false;
  bool scale = false;
  bool ft_sites = false;
  bool ft_noise = false;

  int count() const;
  std::vector<std::string> step_names() const;
  bool operator==(const PreprocFlags&) const = default;
};

/// All 16 step subsets, in a fixed enumeration order.
std::vector<PreprocFlags> all_preprocessing_cells();

struct GridSpec {
  std::vector<PreprocFlags> preprocessing_cells = all_preprocessing_cells();
  std::vector<ForestParams> classifier_cells = {rf_defaults()};
  FtSitesConfig ft_sites_cfg;
  FtNoiseConfig ft_noise_cfg;

  std::size_t n_cells() const {
    return preprocessing_cells.size() * classifier_cells.size();
  }
  std::pair<PreprocFlags, ForestParams> cell(std::size_t index) const;
  void validate() const;
};

struct TrainedPipeline {
  FeatureSchema input_schema;
  std::optional<SiteNormParams> norm;
  std::optional<SelectionResult> sites_filter;
  std::optional<SelectionResult> noise_filter;
  std::vector<std::string> classifier_features;
  Forest forest;
  PreprocFlags chosen_pre;
  ForestParams chosen_clf;
  std::size_t chosen_cell = 0;
  std::uint64_t seed = 0;
  double train_auc = 0.0;  // self-evaluation of the refit model on its training set

  /// Applies the fitted step chain and predicts class-1 probabilities in
  /// input order. The unknown-site fallback uses the given batch.
  std::vector<double> predict(const FeatureTable& table, int workers = 1) const;
};

struct OuterFoldReport {
  std::string tag;
  std::size_t winner_cell = 0;
  double inner_mean = 0.0;
  std::optional<double> outer_score;  // nullopt: single-class outer test fold
  std::vector<std::string> warnings;
};

struct CVReport {
  std::vector<OuterFoldReport> folds;
  double outer_mean = 0.0;
  double outer_std = 0.0;  // population std over defined outer scores
  std::size_t final_cell = 0;
  std::vector<std::string> warnings;
};

/// Fits one grid cell on a training table: fit + apply the enabled steps in
/// canonical order, then grow the classifier. Deterministic in
/// (table, cell, grid, base_seed); exposed so fold scores can be reproduced
/// independently.
TrainedPipeline fit_pipeline(const FeatureTable& train, std::size_t cell_index,
                             const GridSpec& grid, std::uint64_t base_seed,
                             int workers = 1);

/// Seed used to fit cell `cell` on outer fold `fold` (and for the final
/// refit with fold = npos). Part of the reproducibility contract.
std::uint64_t outer_fit_seed(std::uint64_t master_seed, std::size_t fold,
                             std::size_t cell_index);
std::uint64_t final_fit_seed(std::uint64_t master_seed, std::size_t cell_index);

/// The full nested protocol: per outer fold, grid search on inner splits of
/// the outer-train portion picks a winner (highest mean inner ROC-AUC; ties
/// to fewer steps, then fewer trees, then grid order), which is refit on
/// outer-train and scored on outer-test. The final cell wins the most outer
/// folds (ties to the best mean outer score), and is refit on the whole
/// table. Preprocessing is always fitted inside the training portion only.
std::pair<TrainedPipeline, CVReport> nested_cv_grid_search(
    const FeatureTable& table, const SplitScheme& outer, const SplitScheme& inner,
    const GridSpec& grid, std::uint64_t seed, int workers = 1);

struct ExternalEval {
  std::optional<double> roc_auc;  // nullopt on a single-class table
  std::vector<double> probabilities;
};

ExternalEval evaluate_external(const TrainedPipeline& model, const FeatureTable& table,
                               int workers = 1);

/// Outer scheme default when none is configured: mirror LoSo, otherwise
/// stratified 5-fold.
SplitScheme default_outer_for(const SplitScheme& inner);

}  // namespace batchqc
