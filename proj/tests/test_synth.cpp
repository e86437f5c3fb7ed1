#include "batchqc/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

#include "batchqc/cluster.hpp"
#include "batchqc/crossval.hpp"
#include "batchqc/metrics.hpp"
#include "batchqc/rng.hpp"

using namespace batchqc;

namespace {

SynthConfig small_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n_sites = 4;
  cfg.n_studies = 2;
  cfg.samples_per_site = 50;
  cfg.n_features = 8;
  cfg.n_informative = 3;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("generate: shape, ids, round-robin study assignment") {
  const auto [table, manifest] = generate(small_config(1));
  CHECK(table.size() == 200);
  CHECK(table.n_features() == 8);
  CHECK(table.distinct_sites().size() == 4);
  CHECK(table.distinct_studies().size() == 2);
  std::set<std::string> ids;
  for (const auto& s : table.samples) CHECK(ids.insert(s.id).second);
  CHECK(manifest.informative_features ==
        std::vector<std::string>{"f00", "f01", "f02"});
  CHECK(manifest.site_offsets.size() == 4);
  // Sites alternate between the two studies.
  CHECK(table.samples[0].study != table.samples[60].study);
}

TEST_CASE("generate: bit-identical for identical config and seed") {
  const auto [a, ma] = generate(small_config(99));
  const auto [b, mb] = generate(small_config(99));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.samples[i] == b.samples[i]);
  const auto [c, mc] = generate(small_config(100));
  CHECK(a.samples[0].features != c.samples[0].features);
}

TEST_CASE("generate: empirical prevalence within the binomial 99% CI") {
  SynthConfig cfg = small_config(7);
  cfg.samples_per_site = 500;
  const auto [table, manifest] = generate(cfg);
  std::size_t positives = 0;
  for (const auto& s : table.samples) positives += *s.label;
  const double n = static_cast<double>(table.size());
  const double p = cfg.artifact_prevalence;
  const double half_width = 2.576 * std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(static_cast<double>(positives) / n - p) <= half_width);
}

TEST_CASE("generate: variance grows with each effect strength") {
  const auto variance_of = [](const SynthConfig& cfg) {
    const auto [table, manifest] = generate(cfg);
    double mean = 0.0, var = 0.0;
    const std::size_t n = table.size();
    for (const auto& s : table.samples) mean += s.features[5];
    mean /= static_cast<double>(n);
    for (const auto& s : table.samples)
      var += (s.features[5] - mean) * (s.features[5] - mean);
    return var / static_cast<double>(n);
  };
  double site_sum = 0, study_sum = 0, noise_sum = 0;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    SynthConfig base = small_config(seed);
    SynthConfig more_site = base;
    more_site.site_effect = 3.0;
    SynthConfig more_study = base;
    more_study.study_effect = 3.0;
    SynthConfig more_noise = base;
    more_noise.noise_scale = 3.0;
    const double v0 = variance_of(base);
    site_sum += variance_of(more_site) - v0;
    study_sum += variance_of(more_study) - v0;
    noise_sum += variance_of(more_noise) - v0;
  }
  CHECK(site_sum > 0.0);
  CHECK(study_sum > 0.0);
  CHECK(noise_sum > 0.0);
}

TEST_CASE("generate: site effect strength controls the clustering scores") {
  SynthConfig quiet = small_config(3);
  quiet.site_effect = 0.0;
  quiet.study_effect = 0.0;  // studies nest sites; any study signal leaks into site scores
  const auto [quiet_table, m1] = generate(quiet);
  KMeansConfig kcfg;
  kcfg.n_runs = 30;
  kcfg.seed = 5;
  const auto quiet_score = batch_effect_score(quiet_table, GroupBy::site, kcfg);
  CHECK(quiet_score.completeness_mean < 0.1);
  CHECK(quiet_score.homogeneity_mean < 0.1);

  SynthConfig loud = small_config(3);
  loud.site_effect = 2.0;
  loud.noise_scale = 0.5;
  const auto [loud_table, m2] = generate(loud);
  const auto loud_score = batch_effect_score(loud_table, GroupBy::site, kcfg);
  CHECK(loud_score.completeness_mean > 0.5);
  CHECK(loud_score.homogeneity_mean > 0.5);
}

TEST_CASE("generate: zero artifact shift means chance-level classification") {
  // gamma -> 0 is outside the config contract, so emulate it by shifting a
  // feature subset that the classifier never sees... simplest honest variant:
  // use a tiny shift and verify held-out AUC stays near 0.5.
  double auc_sum = 0.0;
  int measured = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthConfig cfg = small_config(seed);
    cfg.artifact_shift = 1e-9;
    cfg.samples_per_site = 80;
    const auto [table, manifest] = generate(cfg);
    const std::size_t half = table.size() / 2;
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < table.size(); ++i)
      (i % 2 == 0 ? train_rows : test_rows).push_back(i);
    GridSpec grid;
    grid.preprocessing_cells = {PreprocFlags{}};
    ForestParams fp = rf_defaults();
    fp.n_trees = 30;
    grid.classifier_cells = {fp};
    const TrainedPipeline model =
        fit_pipeline(table.select_rows(train_rows), 0, grid, seed, 1);
    const auto eval = evaluate_external(model, table.select_rows(test_rows));
    if (eval.roc_auc) {
      auc_sum += *eval.roc_auc;
      ++measured;
    }
    (void)half;
  }
  REQUIRE(measured >= 8);
  const double mean_auc = auc_sum / measured;
  CHECK(mean_auc >= 0.4);
  CHECK(mean_auc <= 0.6);
}

TEST_CASE("presets exist and validate") {
  const SynthConfig abide = synth_preset("abide-like");
  CHECK(abide.n_studies == 1);
  CHECK(abide.site_effect > 1.0);
  const SynthConfig cati = synth_preset("cati-like");
  CHECK(cati.n_studies > 1);
  CHECK(cati.n_sites > abide.n_sites);
  CHECK_THROWS_AS(synth_preset("nope"), ConfigError);
}

TEST_CASE("config validation rejects out-of-range values") {
  SynthConfig cfg = small_config(0);
  cfg.artifact_prevalence = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config(0);
  cfg.n_informative = 100;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config(0);
  cfg.noise_scale = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
