#include "batchqc/serialize.hpp"

#include <doctest.h>

#include "batchqc/rng.hpp"
#include "test_helpers.hpp"

using namespace batchqc;

namespace {

FeatureTable training_table(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  FeatureTable table;
  table.schema.names = {"a", "b", "c"};
  table.schema.normalized_subset = {"a", "b"};
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.id = "r" + std::to_string(i);
    s.site = "site" + std::to_string(i % 3);
    s.study = "study" + std::to_string(i % 2);
    const int label = static_cast<int>(rng.next_below(2));
    s.label = label;
    s.features = {rng.next_normal() + 1.5 * label, rng.next_normal(), rng.next_normal()};
    table.samples.push_back(std::move(s));
  }
  return table;
}

}  // namespace

TEST_CASE("model JSON round-trip preserves predictions bit-exactly") {
  const auto table = training_table(5, 120);
  GridSpec grid;
  grid.preprocessing_cells = {PreprocFlags{true, true, false, true}};
  ForestParams fp = rf_defaults();
  fp.n_trees = 12;
  grid.classifier_cells = {fp};
  grid.ft_noise_cfg.forest.n_trees = 15;
  const TrainedPipeline model = fit_pipeline(table, 0, grid, 77, 1);

  const json serialized = to_json(model);
  const TrainedPipeline loaded = pipeline_from_json(serialized);
  CHECK(loaded.predict(table) == model.predict(table));

  // Serialize -> parse -> serialize is textually stable.
  const std::string text = serialized.dump(2);
  const std::string text2 = to_json(pipeline_from_json(json::parse(text))).dump(2);
  CHECK(text == text2);
}

TEST_CASE("forest params round-trip all variants") {
  ForestParams p = extra_trees_defaults();
  p.n_trees = 7;
  p.max_depth = 4;
  p.min_samples_leaf = 3;
  p.max_features = ForestParams::MaxFeatures::fraction;
  p.max_features_fraction = 0.4;
  p.class_weight = ForestParams::ClassWeight::none;
  p.seed = 123456789;
  const ForestParams q = forest_params_from_json(to_json(p));
  CHECK(q.n_trees == p.n_trees);
  CHECK(q.max_depth == p.max_depth);
  CHECK(q.min_samples_leaf == p.min_samples_leaf);
  CHECK(q.max_features == p.max_features);
  CHECK(q.max_features_fraction == doctest::Approx(p.max_features_fraction));
  CHECK(q.split_mode == p.split_mode);
  CHECK(q.bootstrap == p.bootstrap);
  CHECK(q.class_weight == p.class_weight);
  CHECK(q.seed == p.seed);
}

TEST_CASE("norm params round-trip including degenerate flags") {
  const auto table = training_table(9, 40);
  auto params = fit_norm(table, NormMode::center_and_scale, {"a", "b"});
  params.per_site["site0"]["a"].degenerate = true;
  const SiteNormParams loaded = norm_params_from_json(to_json(params));
  CHECK(loaded.mode == params.mode);
  CHECK(loaded.feature_subset == params.feature_subset);
  CHECK(loaded.per_site == params.per_site);
}

TEST_CASE("strict config parsing rejects unknown keys by name") {
  const json bad = {{"kind", "kfold"}, {"k", 5}, {"typo_key", 1}};
  try {
    scheme_from_json(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("typo_key") != std::string::npos);
  }
  CHECK_THROWS_AS(forest_params_from_json(json{{"trees", 5}}), ConfigError);
  CHECK_THROWS_AS(synth_config_from_json(json{{"sites", 2}}), ConfigError);
}

TEST_CASE("grid parsing: shorthand strings and explicit cells") {
  const GridSpec all = grid_from_json(json{{"preprocessing_cells", "all"}});
  CHECK(all.preprocessing_cells.size() == 16);
  const GridSpec none = grid_from_json(json{{"preprocessing_cells", "none"}});
  REQUIRE(none.preprocessing_cells.size() == 1);
  CHECK(none.preprocessing_cells[0].count() == 0);

  const GridSpec two = grid_from_json(
      json{{"preprocessing_cells", json::array({json::array({"center", "scale"}),
                                                json::array({"ft_noise"})})}});
  REQUIRE(two.preprocessing_cells.size() == 2);
  CHECK(two.preprocessing_cells[0].center);
  CHECK(two.preprocessing_cells[0].scale);
  CHECK(two.preprocessing_cells[1].ft_noise);
  CHECK_THROWS_AS(grid_from_json(json{{"preprocessing_cells", json::array({json::array(
                      {"centre"})})}}),
                  ConfigError);
}

TEST_CASE("label rule and scheme parsing") {
  const LabelRule thr = label_rule_from_json(json{{"kind", "threshold"}, {"rating_cutoff", 1}});
  CHECK(thr.kind == LabelRule::Kind::threshold);
  CHECK(thr.rating_cutoff == 1);
  const LabelRule cat = label_rule_from_json(
      json{{"kind", "categorical"}, {"map", {{"accept", 0}, {"exclude", 1}}}});
  CHECK(cat.category_map.at("exclude") == 1);
  CHECK_THROWS_AS(label_rule_from_json(json{{"kind", "nope"}}), ConfigError);

  const SplitScheme loso = scheme_from_json(json{{"kind", "loso"}});
  CHECK(loso.kind == SplitScheme::Kind::loso);
  CHECK_THROWS_AS(scheme_from_json(json{{"kind", "kfold"}, {"k", 1}}), ConfigError);
}

TEST_CASE("selection result and clustering score serialize with stable keys") {
  SelectionResult result;
  result.kept = {"a"};
  result.removed = {{"b", 3.0}};
  result.accuracy_trace = {0.9, 0.5};
  const json j = to_json(result);
  CHECK(j.at("kept")[0] == "a");
  CHECK(j.at("removed")[0].at("diagnostic") == 3.0);
  const SelectionResult back = selection_from_json(j);
  CHECK(back.kept == result.kept);
  CHECK(back.removed == result.removed);

  ClusteringScore score;
  score.k = 4;
  score.completeness_mean = 0.5;
  const json sj = to_json(score, "site");
  CHECK(sj.at("group_by") == "site");
  CHECK(sj.at("k") == 4);
}
