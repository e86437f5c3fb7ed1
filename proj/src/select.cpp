#include "batchqc/select.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "batchqc/rng.hpp"

namespace batchqc {

namespace {

constexpr std::uint64_t kTagHoldout = 0x71;
constexpr std::uint64_t kTagForest = 0x72;
constexpr std::uint64_t kTagColumns = 0x73;
constexpr std::uint64_t kTagPermute = 0x74;
constexpr std::uint64_t kTagLayout = 0x75;

double balanced_accuracy(const std::vector<int>& truth, const std::vector<int>& predicted,
                         int n_classes) {
  std::vector<std::size_t> correct(static_cast<std::size_t>(n_classes), 0);
  std::vector<std::size_t> total(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++total[static_cast<std::size_t>(truth[i])];
    if (truth[i] == predicted[i]) ++correct[static_cast<std::size_t>(truth[i])];
  }
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < n_classes; ++c) {
    if (total[static_cast<std::size_t>(c)] == 0) continue;
    sum += static_cast<double>(correct[static_cast<std::size_t>(c)]) /
           static_cast<double>(total[static_cast<std::size_t>(c)]);
    ++present;
  }
  return present > 0 ? sum / present : 0.0;
}

}  // namespace

void FtSitesConfig::validate() const {
  if (margin < 0.0) throw ConfigError("ft_sites: margin must be >= 0");
  if (max_remove_fraction <= 0.0 || max_remove_fraction >= 1.0)
    throw ConfigError("ft_sites: max_remove_fraction must be in (0,1)");
  if (holdout_fraction <= 0.0 || holdout_fraction >= 1.0)
    throw ConfigError("ft_sites: holdout_fraction must be in (0,1)");
  forest.validate();
}

void FtNoiseConfig::validate() const {
  if (n_iterations < 1) throw ConfigError("ft_noise: n_iterations must be >= 1");
  if (n_noise_features < 0) throw ConfigError("ft_noise: n_noise_features must be >= 0");
  if (snr_threshold < 0.0) throw ConfigError("ft_noise: snr_threshold must be >= 0");
  if (survival_fraction <= 0.0 || survival_fraction > 1.0)
    throw ConfigError("ft_noise: survival_fraction must be in (0,1]");
  forest.validate();
}

SelectionResult ft_sites(const FeatureTable& table, const FtSitesConfig& cfg, int workers) {
  cfg.validate();
  SelectionResult result;
  result.kept = table.schema.names;

  const auto by_site = table.rows_by_site();
  const bool undersized =
      by_site.size() < 2 ||
      std::any_of(by_site.begin(), by_site.end(),
                  [](const auto& kv) { return kv.second.size() < 2; });
  if (undersized) {
    log_warn("ft_sites: fewer than 2 sites or a site with < 2 samples; skipping");
    result.noop = true;
    return result;
  }

  // Site ids -> class indices, in sorted site order.
  std::vector<int> site_class(table.size());
  {
    int c = 0;
    for (const auto& [site, rows] : by_site) {
      for (const std::size_t r : rows) site_class[r] = c;
      ++c;
    }
  }
  const int n_sites = static_cast<int>(by_site.size());
  const double chance = 1.0 / static_cast<double>(n_sites);
  const std::size_t max_removals = static_cast<std::size_t>(
      std::floor(cfg.max_remove_fraction * static_cast<double>(table.n_features())));

  std::vector<std::string> working = table.schema.names;
  std::set<std::string> removed_names;

  for (std::size_t round = 0;; ++round) {
    const std::uint64_t round_seed = mix(cfg.seed, round);

    // Stratified train/holdout split: at least one holdout row per site.
    std::vector<std::size_t> train_rows, holdout_rows;
    for (const auto& [site, rows] : by_site) {
      Rng rng(mix(round_seed, kTagHoldout, hash_str(site)));
      const std::size_t n_hold = std::clamp<std::size_t>(
          static_cast<std::size_t>(
              std::floor(cfg.holdout_fraction * static_cast<double>(rows.size()) + 0.5)),
          1, rows.size() - 1);
      const auto picked = sample_without_replacement(rows.size(), n_hold, rng);
      std::vector<bool> held(rows.size(), false);
      for (const std::size_t p : picked) held[p] = true;
      for (std::size_t p = 0; p < rows.size(); ++p)
        (held[p] ? holdout_rows : train_rows).push_back(rows[p]);
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(holdout_rows.begin(), holdout_rows.end());

    const FeatureTable current = table.select_features(working);
    const auto gather = [&](const std::vector<std::size_t>& rows) {
      Matrix m(rows.size(), working.size());
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < working.size(); ++j)
          m(i, j) = current.samples[rows[i]].features[j];
      return m;
    };
    std::vector<int> y_train, y_holdout;
    for (const std::size_t r : train_rows) y_train.push_back(site_class[r]);
    for (const std::size_t r : holdout_rows) y_holdout.push_back(site_class[r]);

    ForestParams fp = cfg.forest;
    fp.split_mode = SplitMode::extra_random_split;
    fp.seed = mix(round_seed, kTagForest);
    const Forest forest = fit_forest(gather(train_rows), y_train, fp, n_sites, workers);
    const auto predicted = forest.predict_class(gather(holdout_rows), workers);
    const double acc = balanced_accuracy(y_holdout, predicted, n_sites);
    result.accuracy_trace.push_back(acc);

    if (acc <= chance + cfg.margin || removed_names.size() >= max_removals) break;

    std::size_t top = 0;
    for (std::size_t f = 1; f < working.size(); ++f)
      if (forest.importances[f] > forest.importances[top]) top = f;
    removed_names.insert(working[top]);
    result.removed.push_back({working[top], acc});
    working.erase(working.begin() + static_cast<std::ptrdiff_t>(top));
    if (working.empty()) break;  // unreachable: max_remove_fraction < 1
  }

  result.kept.clear();
  for (const auto& name : table.schema.names)
    if (!removed_names.count(name)) result.kept.push_back(name);
  return result;
}

SelectionResult ft_noise(const FeatureTable& table, const std::vector<int>& labels,
                         const FtNoiseConfig& cfg, int workers) {
  cfg.validate();
  if (labels.size() != table.size()) throw DataError("ft_noise: labels/rows mismatch");
  const std::set<int> classes(labels.begin(), labels.end());
  if (classes.size() < 2) throw DataError("ft_noise: constant labels, nothing to predict");

  const std::size_t n = table.size();
  const std::size_t d = table.n_features();
  const std::size_t n_noise =
      cfg.n_noise_features == 0 ? d : static_cast<std::size_t>(cfg.n_noise_features);

  const Matrix real = table.feature_matrix();
  std::vector<std::size_t> survivals(d, 0);
  std::vector<double> importance_sum(d, 0.0);

  for (int iter = 0; iter < cfg.n_iterations; ++iter) {
    const std::uint64_t iter_seed = mix(cfg.seed, static_cast<std::uint64_t>(iter));

    // Noise features: independently permuted copies of randomly chosen real
    // columns. Marginals survive, associations do not, so importances stay
    // on a comparable scale.
    Rng col_rng(mix(iter_seed, kTagColumns));
    std::vector<std::size_t> source_cols;
    if (n_noise <= d) {
      source_cols = sample_without_replacement(d, n_noise, col_rng);
    } else {
      for (std::size_t j = 0; j < n_noise; ++j)
        source_cols.push_back(static_cast<std::size_t>(col_rng.next_below(d)));
    }
    Matrix noise(n, n_noise);
    for (std::size_t j = 0; j < n_noise; ++j) {
      std::vector<std::size_t> perm(n);
      for (std::size_t i = 0; i < n; ++i) perm[i] = i;
      Rng perm_rng(mix(iter_seed, kTagPermute, j));
      shuffle(perm, perm_rng);
      for (std::size_t i = 0; i < n; ++i) noise(i, j) = real(perm[i], source_cols[j]);
    }

    // Column layout is shuffled per iteration. The forest resolves exact gain
    // ties to the lowest feature index, which at tiny nodes systematically
    // favors earlier columns; a fixed [real | noise] layout would let every
    // real feature beat the noise bar on position alone.
    std::vector<std::size_t> layout(d + n_noise);
    for (std::size_t j = 0; j < layout.size(); ++j) layout[j] = j;
    Rng layout_rng(mix(iter_seed, kTagLayout));
    shuffle(layout, layout_rng);
    Matrix X(n, d + n_noise);
    for (std::size_t pos = 0; pos < layout.size(); ++pos) {
      const std::size_t logical = layout[pos];
      for (std::size_t i = 0; i < n; ++i)
        X(i, pos) = logical < d ? real(i, logical) : noise(i, logical - d);
    }

    ForestParams fp = cfg.forest;
    fp.split_mode = SplitMode::extra_random_split;
    fp.seed = mix(iter_seed, kTagForest);
    const Forest forest = fit_forest(X, labels, fp, 0, workers);

    std::vector<double> importance(d + n_noise);
    for (std::size_t pos = 0; pos < layout.size(); ++pos)
      importance[layout[pos]] = forest.importances[pos];

    double max_noise = 0.0;
    for (std::size_t j = 0; j < n_noise; ++j)
      max_noise = std::max(max_noise, importance[d + j]);
    const double bar = cfg.snr_threshold * max_noise;
    for (std::size_t j = 0; j < d; ++j) {
      importance_sum[j] += importance[j];
      // bar == 0 counts as survival: with importances >= 0 the comparison is
      // vacuous there (exact-zero ties survive).
      if (importance[j] > bar || bar == 0.0) ++survivals[j];
    }
  }

  const double needed = cfg.survival_fraction * static_cast<double>(cfg.n_iterations);
  SelectionResult result;
  for (std::size_t j = 0; j < d; ++j) {
    if (static_cast<double>(survivals[j]) >= needed - 1e-9)
      result.kept.push_back(table.schema.names[j]);
    else
      result.removed.push_back(
          {table.schema.names[j], static_cast<double>(survivals[j])});
  }
  if (result.kept.empty()) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (importance_sum[j] > importance_sum[best]) best = j;
    result.kept.push_back(table.schema.names[best]);
    result.removed.erase(
        std::remove_if(result.removed.begin(), result.removed.end(),
                       [&](const RemovedFeature& r) { return r.name == result.kept[0]; }),
        result.removed.end());
    result.kept_guard_triggered = true;
    log_warn("ft_noise: no feature beat the noise bar; keeping '" + result.kept[0] + "'");
  }
  return result;
}

}  // namespace batchqc
