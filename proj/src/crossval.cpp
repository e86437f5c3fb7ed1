#include "batchqc/crossval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "batchqc/metrics.hpp"
#include "batchqc/rng.hpp"

namespace batchqc {

namespace {

constexpr std::uint64_t kTagOuterFit = 0x11;
constexpr std::uint64_t kTagInnerFit = 0x12;
constexpr std::uint64_t kTagFinalFit = 0x13;
constexpr std::uint64_t kTagInnerSplit = 0x14;
constexpr std::uint64_t kTagNormFit = 0x21;  // reserved for future stochastic fitters
constexpr std::uint64_t kTagFtSites = 0x22;
constexpr std::uint64_t kTagFtNoise = 0x23;
constexpr std::uint64_t kTagForest = 0x24;

std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& taken) {
  std::vector<bool> mask(n, false);
  for (const std::size_t i : taken) mask[i] = true;
  std::vector<std::size_t> out;
  out.reserve(n - taken.size());
  for (std::size_t i = 0; i < n; ++i)
    if (!mask[i]) out.push_back(i);
  return out;
}

}  // namespace

void SplitScheme::validate() const {
  if (kind != Kind::loso && k < 2) throw ConfigError("split scheme: k must be >= 2");
}

std::vector<Fold> make_splits(const FeatureTable& table, const SplitScheme& scheme) {
  scheme.validate();
  const std::size_t n = table.size();
  std::vector<Fold> folds;

  switch (scheme.kind) {
    case SplitScheme::Kind::loso: {
      const auto by_site = table.rows_by_site();
      if (by_site.size() < 2) throw DataError("loso: need at least 2 sites");
      for (const auto& [site, rows] : by_site) {
        Fold fold;
        fold.tag = site;
        fold.test = rows;
        fold.train = complement(n, rows);
        folds.push_back(std::move(fold));
      }
      break;
    }
    case SplitScheme::Kind::kfold: {
      if (static_cast<std::size_t>(scheme.k) > n)
        throw DataError("kfold: k > number of samples");
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      if (scheme.shuffled) {
        Rng rng(scheme.seed);
        shuffle(order, rng);
      }
      const std::size_t k = static_cast<std::size_t>(scheme.k);
      std::size_t start = 0;
      for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = n / k + (f < n % k ? 1 : 0);
        Fold fold;
        fold.tag = "fold" + std::to_string(f);
        fold.test.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(start + size));
        std::sort(fold.test.begin(), fold.test.end());
        fold.train = complement(n, fold.test);
        folds.push_back(std::move(fold));
        start += size;
      }
      break;
    }
    case SplitScheme::Kind::stratified_kfold: {
      if (static_cast<std::size_t>(scheme.k) > n)
        throw DataError("stratified_kfold: k > number of samples");
      if (!table.has_labels())
        throw DataError("stratified_kfold: table has unlabeled rows");
      const std::size_t k = static_cast<std::size_t>(scheme.k);
      // Per class (sorted), deal shuffled members round-robin, carrying the
      // fold offset across classes to keep overall fold sizes near-equal.
      std::map<int, std::vector<std::size_t>> by_class;
      for (std::size_t i = 0; i < n; ++i) by_class[*table.samples[i].label].push_back(i);
      std::vector<std::vector<std::size_t>> test_sets(k);
      std::size_t offset = 0;
      for (const auto& [label, members_const] : by_class) {
        std::vector<std::size_t> members = members_const;
        Rng rng(mix(scheme.seed, static_cast<std::uint64_t>(label)));
        shuffle(members, rng);
        for (std::size_t i = 0; i < members.size(); ++i)
          test_sets[(offset + i) % k].push_back(members[i]);
        offset = (offset + members.size()) % k;
      }
      for (std::size_t f = 0; f < k; ++f) {
        Fold fold;
        fold.tag = "fold" + std::to_string(f);
        fold.test = std::move(test_sets[f]);
        std::sort(fold.test.begin(), fold.test.end());
        fold.train = complement(n, fold.test);
        folds.push_back(std::move(fold));
      }
      break;
    }
  }
  return folds;
}

int PreprocFlags::count() const {
  return static_cast<int>(center) + static_cast<int>(scale) + static_cast<int>(ft_sites) +
         static_cast<int>(ft_noise);
}

std::vector<std::string> PreprocFlags::step_names() const {
  std::vector<std::string> out;
  if (center) out.push_back("center");
  if (scale) out.push_back("scale");
  if (ft_sites) out.push_back("ft_sites");
  if (ft_noise) out.push_back("ft_noise");
  return out;
}

std::vector<PreprocFlags> all_preprocessing_cells() {
  std::vector<PreprocFlags> cells;
  for (int bits = 0; bits < 16; ++bits)
    cells.push_back({(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0, (bits & 8) != 0});
  return cells;
}

std::pair<PreprocFlags, ForestParams> GridSpec::cell(std::size_t index) const {
  const std::size_t pre = index / classifier_cells.size();
  const std::size_t clf = index % classifier_cells.size();
  return {preprocessing_cells[pre], classifier_cells[clf]};
}

void GridSpec::validate() const {
  if (preprocessing_cells.empty()) throw ConfigError("grid: no preprocessing cells");
  if (classifier_cells.empty()) throw ConfigError("grid: no classifier cells");
  for (const auto& params : classifier_cells) params.validate();
  ft_sites_cfg.validate();
  ft_noise_cfg.validate();
}

std::uint64_t outer_fit_seed(std::uint64_t master_seed, std::size_t fold,
                             std::size_t cell_index) {
  return mix(master_seed, kTagOuterFit, fold, cell_index);
}

std::uint64_t final_fit_seed(std::uint64_t master_seed, std::size_t cell_index) {
  return mix(master_seed, kTagFinalFit, cell_index);
}

TrainedPipeline fit_pipeline(const FeatureTable& train, std::size_t cell_index,
                             const GridSpec& grid, std::uint64_t base_seed, int workers) {
  const auto [pre, clf] = grid.cell(cell_index);

  TrainedPipeline pipeline;
  pipeline.input_schema = train.schema;
  pipeline.chosen_pre = pre;
  pipeline.chosen_clf = clf;
  pipeline.chosen_cell = cell_index;
  pipeline.seed = base_seed;

  FeatureTable work = train;
  if (pre.center || pre.scale) {
    const NormMode mode = pre.center && pre.scale ? NormMode::center_and_scale
                          : pre.center           ? NormMode::center
                                                 : NormMode::scale;
    pipeline.norm = fit_norm(work, mode, work.schema.normalized_subset);
    work = apply_norm(*pipeline.norm, work);
  }
  if (pre.ft_sites) {
    FtSitesConfig cfg = grid.ft_sites_cfg;
    cfg.seed = mix(base_seed, kTagFtSites);
    pipeline.sites_filter = ft_sites(work, cfg, workers);
    work = work.select_features(pipeline.sites_filter->kept);
  }
  if (pre.ft_noise) {
    FtNoiseConfig cfg = grid.ft_noise_cfg;
    cfg.seed = mix(base_seed, kTagFtNoise);
    pipeline.noise_filter = ft_noise(work, work.labels(), cfg, workers);
    work = work.select_features(pipeline.noise_filter->kept);
  }
  pipeline.classifier_features = work.schema.names;

  ForestParams params = clf;
  params.seed = mix(base_seed, kTagForest);
  pipeline.forest = fit_forest(work.feature_matrix(), work.labels(), params, 2, workers);
  return pipeline;
}

std::vector<double> TrainedPipeline::predict(const FeatureTable& table, int workers) const {
  // Project onto the training schema by name (test CSVs may order columns
  // differently or carry extras).
  for (const auto& name : input_schema.names)
    if (!table.schema.index_of(name))
      throw DataError("predict: table lacks feature '" + name + "'");
  FeatureTable work = table.select_features(input_schema.names);
  work.schema = input_schema;

  if (norm) work = apply_norm(*norm, work);
  work = work.select_features(classifier_features);
  if (work.size() == 0) return {};
  return forest.predict_proba(work.feature_matrix(), workers);
}

ExternalEval evaluate_external(const TrainedPipeline& model, const FeatureTable& table,
                               int workers) {
  ExternalEval eval;
  eval.probabilities = model.predict(table, workers);
  if (table.has_labels() && !table.samples.empty()) {
    const std::set<int> classes = [&] {
      std::set<int> s;
      for (const auto& sample : table.samples) s.insert(*sample.label);
      return s;
    }();
    if (classes.size() >= 2)
      eval.roc_auc = roc_auc({eval.probabilities, table.labels()});
  }
  return eval;
}

SplitScheme default_outer_for(const SplitScheme& inner) {
  if (inner.kind == SplitScheme::Kind::loso) return inner;
  SplitScheme outer;
  outer.kind = SplitScheme::Kind::stratified_kfold;
  outer.k = 5;
  outer.seed = inner.seed;
  return outer;
}

namespace {

struct CellScore {
  std::optional<double> mean;  // nullopt: disqualified (no valid inner fold)
  int n_valid_folds = 0;
};

// Highest mean, ties to fewer preprocessing steps, then fewer trees, then
// grid order.
bool cell_wins(const GridSpec& grid, std::size_t a, const CellScore& sa, std::size_t b,
               const CellScore& sb) {
  if (!sb.mean) return sa.mean.has_value();
  if (!sa.mean) return false;
  if (*sa.mean != *sb.mean) return *sa.mean > *sb.mean;
  const auto [pre_a, clf_a] = grid.cell(a);
  const auto [pre_b, clf_b] = grid.cell(b);
  if (pre_a.count() != pre_b.count()) return pre_a.count() < pre_b.count();
  if (clf_a.n_trees != clf_b.n_trees) return clf_a.n_trees < clf_b.n_trees;
  return a < b;
}

}  // namespace

std::pair<TrainedPipeline, CVReport> nested_cv_grid_search(
    const FeatureTable& table, const SplitScheme& outer, const SplitScheme& inner,
    const GridSpec& grid, std::uint64_t seed, int workers) {
  grid.validate();
  if (!table.has_labels()) throw DataError("nested_cv: table has unlabeled rows");
  const auto outer_folds = make_splits(table, outer);

  CVReport report;
  std::vector<std::size_t> wins_per_cell(grid.n_cells(), 0);

  for (std::size_t of = 0; of < outer_folds.size(); ++of) {
    const Fold& fold = outer_folds[of];
    const FeatureTable outer_train = table.select_rows(fold.train);
    const FeatureTable outer_test = table.select_rows(fold.test);

    SplitScheme inner_eff = inner;
    inner_eff.seed = mix(seed, kTagInnerSplit, of, inner.seed);
    const auto inner_folds = make_splits(outer_train, inner_eff);

    OuterFoldReport fold_report;
    fold_report.tag = fold.tag;

    std::vector<CellScore> scores(grid.n_cells());
    for (std::size_t cell = 0; cell < grid.n_cells(); ++cell) {
      double sum = 0.0;
      int valid = 0;
      for (std::size_t inf = 0; inf < inner_folds.size(); ++inf) {
        const FeatureTable inner_train = outer_train.select_rows(inner_folds[inf].train);
        const FeatureTable inner_test = outer_train.select_rows(inner_folds[inf].test);
        const std::uint64_t fit_seed = mix(seed, kTagInnerFit, of, inf, cell);
        const TrainedPipeline candidate =
            fit_pipeline(inner_train, cell, grid, fit_seed, workers);
        const ExternalEval eval = evaluate_external(candidate, inner_test, workers);
        if (eval.roc_auc) {
          sum += *eval.roc_auc;
          ++valid;
        } else {
          fold_report.warnings.push_back("inner fold " + inner_folds[inf].tag +
                                         ": single-class test set, score excluded");
        }
      }
      if (valid > 0) scores[cell] = {sum / valid, valid};
    }

    std::size_t winner = 0;
    for (std::size_t cell = 1; cell < grid.n_cells(); ++cell)
      if (cell_wins(grid, cell, scores[cell], winner, scores[winner])) winner = cell;
    if (!scores[winner].mean)
      throw TrainError("nested_cv: every grid cell was disqualified on outer fold '" +
                       fold.tag + "'");

    const TrainedPipeline refit =
        fit_pipeline(outer_train, winner, grid, outer_fit_seed(seed, of, winner), workers);
    const ExternalEval outer_eval = evaluate_external(refit, outer_test, workers);
    if (!outer_eval.roc_auc)
      fold_report.warnings.push_back("outer fold: single-class test set, score undefined");

    fold_report.winner_cell = winner;
    fold_report.inner_mean = *scores[winner].mean;
    fold_report.outer_score = outer_eval.roc_auc;
    ++wins_per_cell[winner];
    report.folds.push_back(std::move(fold_report));
  }

  // Plurality over outer folds; ties resolve to the better mean outer score
  // across the folds each cell won, then to grid order.
  const auto mean_outer_for = [&](std::size_t cell) {
    double sum = 0.0;
    int count = 0;
    for (const auto& fr : report.folds) {
      if (fr.winner_cell != cell || !fr.outer_score) continue;
      sum += *fr.outer_score;
      ++count;
    }
    return count > 0 ? sum / count : -1.0;
  };
  std::size_t final_cell = 0;
  bool have_final = false;
  for (std::size_t cell = 0; cell < grid.n_cells(); ++cell) {
    if (wins_per_cell[cell] == 0) continue;
    if (!have_final || wins_per_cell[cell] > wins_per_cell[final_cell] ||
        (wins_per_cell[cell] == wins_per_cell[final_cell] &&
         mean_outer_for(cell) > mean_outer_for(final_cell))) {
      final_cell = cell;
      have_final = true;
    }
  }
  report.final_cell = final_cell;

  std::vector<double> defined;
  for (const auto& fr : report.folds)
    if (fr.outer_score) defined.push_back(*fr.outer_score);
  if (defined.empty()) {
    report.warnings.push_back("no outer fold produced a defined score");
  } else {
    report.outer_mean =
        std::accumulate(defined.begin(), defined.end(), 0.0) / defined.size();
    double ss = 0.0;
    for (const double s : defined) ss += (s - report.outer_mean) * (s - report.outer_mean);
    report.outer_std = std::sqrt(ss / defined.size());
  }

  TrainedPipeline final_pipeline =
      fit_pipeline(table, final_cell, grid, final_fit_seed(seed, final_cell), workers);
  final_pipeline.seed = seed;
  const ExternalEval self_eval = evaluate_external(final_pipeline, table, workers);
  final_pipeline.train_auc = self_eval.roc_auc.value_or(0.0);
  return {std::move(final_pipeline), std::move(report)};
}

}  // namespace batchqc
