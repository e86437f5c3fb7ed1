#include "batchqc/serialize.hpp"

#include <fstream>

namespace batchqc {

namespace {

const char* norm_mode_name(NormMode mode) {
  switch (mode) {
    case NormMode::center: return "center";
    case NormMode::scale: return "scale";
    case NormMode::center_and_scale: return "center_and_scale";
  }
  return "center_and_scale";
}

NormMode norm_mode_from_name(const std::string& name) {
  if (name == "center") return NormMode::center;
  if (name == "scale") return NormMode::scale;
  if (name == "center_and_scale") return NormMode::center_and_scale;
  throw ConfigError("unknown normalization mode '" + name + "'");
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

}  // namespace

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(context + ": unknown key '" + key + "'");
  }
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
  return j;
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

// ---- schema ----

json to_json(const FeatureSchema& schema) {
  return {{"names", schema.names}, {"normalized_subset", schema.normalized_subset}};
}

FeatureSchema schema_from_json(const json& j) {
  check_keys(j, {"names", "normalized_subset"}, "schema");
  FeatureSchema schema;
  schema.names = j.at("names").get<std::vector<std::string>>();
  schema.normalized_subset =
      get_or<std::vector<std::string>>(j, "normalized_subset", schema.names);
  schema.validate();
  return schema;
}

// ---- normalization ----

json to_json(const SiteNormParams& params) {
  json per_site = json::object();
  for (const auto& [site, stats] : params.per_site) {
    json entry = json::object();
    for (const auto& [feature, e] : stats)
      entry[feature] = json::array({e.location, e.spread, e.degenerate});
    per_site[site] = std::move(entry);
  }
  return {{"mode", norm_mode_name(params.mode)},
          {"quantile_bounds", json::array({params.q_low, params.q_high})},
          {"feature_subset", params.feature_subset},
          {"fallback",
           params.fallback == SiteNormParams::Fallback::whole_batch ? "whole_batch"
                                                                    : "per_site"},
          {"per_site", std::move(per_site)}};
}

SiteNormParams norm_params_from_json(const json& j) {
  check_keys(j, {"mode", "quantile_bounds", "feature_subset", "fallback", "per_site"},
             "norm_params");
  SiteNormParams params;
  params.mode = norm_mode_from_name(j.at("mode").get<std::string>());
  params.q_low = j.at("quantile_bounds").at(0).get<double>();
  params.q_high = j.at("quantile_bounds").at(1).get<double>();
  params.feature_subset = j.at("feature_subset").get<std::vector<std::string>>();
  const std::string fallback = get_or<std::string>(j, "fallback", "whole_batch");
  if (fallback == "whole_batch")
    params.fallback = SiteNormParams::Fallback::whole_batch;
  else if (fallback == "per_site")
    params.fallback = SiteNormParams::Fallback::per_site;
  else
    throw ConfigError("unknown fallback kind '" + fallback + "'");
  for (const auto& [site, stats] : j.at("per_site").items()) {
    for (const auto& [feature, arr] : stats.items()) {
      NormEntry e;
      e.location = arr.at(0).get<double>();
      e.spread = arr.at(1).get<double>();
      e.degenerate = arr.at(2).get<bool>();
      params.per_site[site][feature] = e;
    }
  }
  return params;
}

// ---- forest ----

json to_json(const ForestParams& params) {
  json max_features;
  switch (params.max_features) {
    case ForestParams::MaxFeatures::sqrt_total: max_features = "sqrt"; break;
    case ForestParams::MaxFeatures::all: max_features = "all"; break;
    case ForestParams::MaxFeatures::fraction: max_features = params.max_features_fraction; break;
  }
  return {{"n_trees", params.n_trees},
          {"max_depth", params.max_depth == 0 ? json(nullptr) : json(params.max_depth)},
          {"min_samples_leaf", params.min_samples_leaf},
          {"max_features", max_features},
          {"split_mode", params.split_mode == SplitMode::rf_best_split
                             ? "rf_best_split"
                             : "extra_random_split"},
          {"bootstrap", params.bootstrap},
          {"class_weight",
           params.class_weight == ForestParams::ClassWeight::balanced ? "balanced" : "none"},
          {"seed", params.seed}};
}

ForestParams forest_params_from_json(const json& j) {
  check_keys(j,
             {"n_trees", "max_depth", "min_samples_leaf", "max_features", "split_mode",
              "bootstrap", "class_weight", "seed"},
             "forest_params");
  const std::string split = get_or<std::string>(j, "split_mode", "rf_best_split");
  ForestParams params;
  if (split == "rf_best_split") {
    params = rf_defaults();
  } else if (split == "extra_random_split") {
    params = extra_trees_defaults();
  } else {
    throw ConfigError("unknown split_mode '" + split + "'");
  }
  params.n_trees = get_or<int>(j, "n_trees", params.n_trees);
  params.max_depth = get_or<int>(j, "max_depth", 0);
  params.min_samples_leaf = get_or<int>(j, "min_samples_leaf", params.min_samples_leaf);
  if (j.contains("max_features")) {
    const json& mf = j.at("max_features");
    if (mf.is_string() && mf.get<std::string>() == "sqrt") {
      params.max_features = ForestParams::MaxFeatures::sqrt_total;
    } else if (mf.is_string() && mf.get<std::string>() == "all") {
      params.max_features = ForestParams::MaxFeatures::all;
    } else if (mf.is_number()) {
      params.max_features = ForestParams::MaxFeatures::fraction;
      params.max_features_fraction = mf.get<double>();
    } else {
      throw ConfigError("max_features must be \"sqrt\", \"all\" or a fraction");
    }
  }
  params.bootstrap = get_or<bool>(j, "bootstrap", params.bootstrap);
  const std::string cw = get_or<std::string>(j, "class_weight", "balanced");
  if (cw == "balanced")
    params.class_weight = ForestParams::ClassWeight::balanced;
  else if (cw == "none")
    params.class_weight = ForestParams::ClassWeight::none;
  else
    throw ConfigError("unknown class_weight '" + cw + "'");
  params.seed = get_or<std::uint64_t>(j, "seed", 0);
  params.validate();
  return params;
}

json to_json(const Forest& forest) {
  json trees = json::array();
  for (const auto& tree : forest.trees) {
    json nodes = json::array();
    for (const auto& node : tree.nodes) {
      nodes.push_back({{"feature", node.feature},
                       {"threshold", node.threshold},
                       {"left", node.left},
                       {"right", node.right},
                       {"leaf_freqs", node.leaf_freqs}});
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  return {{"params", to_json(forest.params)},
          {"n_classes", forest.n_classes},
          {"n_features", forest.n_features},
          {"importances", forest.importances},
          {"trees", std::move(trees)}};
}

Forest forest_from_json(const json& j) {
  check_keys(j, {"params", "n_classes", "n_features", "importances", "trees"}, "forest");
  Forest forest;
  forest.params = forest_params_from_json(j.at("params"));
  forest.n_classes = j.at("n_classes").get<int>();
  forest.n_features = j.at("n_features").get<std::size_t>();
  forest.importances = j.at("importances").get<std::vector<double>>();
  for (const auto& jt : j.at("trees")) {
    Tree tree;
    for (const auto& jn : jt.at("nodes")) {
      TreeNode node;
      node.feature = jn.at("feature").get<int>();
      node.threshold = jn.at("threshold").get<double>();
      node.left = jn.at("left").get<int>();
      node.right = jn.at("right").get<int>();
      node.leaf_freqs = jn.at("leaf_freqs").get<std::vector<double>>();
      tree.nodes.push_back(std::move(node));
    }
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

// ---- selection ----

json to_json(const SelectionResult& result) {
  json removed = json::array();
  for (const auto& r : result.removed)
    removed.push_back({{"name", r.name}, {"diagnostic", r.diagnostic}});
  return {{"kept", result.kept},
          {"removed", std::move(removed)},
          {"accuracy_trace", result.accuracy_trace},
          {"noop", result.noop},
          {"kept_guard_triggered", result.kept_guard_triggered}};
}

SelectionResult selection_from_json(const json& j) {
  check_keys(j, {"kept", "removed", "accuracy_trace", "noop", "kept_guard_triggered"},
             "selection");
  SelectionResult result;
  result.kept = j.at("kept").get<std::vector<std::string>>();
  for (const auto& jr : j.at("removed"))
    result.removed.push_back(
        {jr.at("name").get<std::string>(), jr.at("diagnostic").get<double>()});
  result.accuracy_trace = get_or<std::vector<double>>(j, "accuracy_trace", {});
  result.noop = get_or<bool>(j, "noop", false);
  result.kept_guard_triggered = get_or<bool>(j, "kept_guard_triggered", false);
  return result;
}

// ---- preprocessing flags ----

json to_json(const PreprocFlags& flags) { return flags.step_names(); }

PreprocFlags preproc_flags_from_json(const json& j) {
  PreprocFlags flags;
  for (const auto& step : j) {
    const std::string name = step.get<std::string>();
    if (name == "center")
      flags.center = true;
    else if (name == "scale")
      flags.scale = true;
    else if (name == "ft_sites")
      flags.ft_sites = true;
    else if (name == "ft_noise")
      flags.ft_noise = true;
    else
      throw ConfigError("unknown preprocessing step '" + name + "'");
  }
  return flags;
}

// ---- trained pipeline (model file) ----

json to_json(const TrainedPipeline& pipeline) {
  json steps = {{"norm", pipeline.norm ? to_json(*pipeline.norm) : json(nullptr)},
                {"ft_sites", pipeline.sites_filter ? to_json(*pipeline.sites_filter)
                                                   : json(nullptr)},
                {"ft_noise", pipeline.noise_filter ? to_json(*pipeline.noise_filter)
                                                   : json(nullptr)}};
  return {{"format_version", 1},
          {"seed", pipeline.seed},
          {"schema", to_json(pipeline.input_schema)},
          {"steps", std::move(steps)},
          {"classifier_features", pipeline.classifier_features},
          {"forest", to_json(pipeline.forest)},
          {"chosen_cell",
           {{"index", pipeline.chosen_cell},
            {"preprocessing", to_json(pipeline.chosen_pre)},
            {"classifier", to_json(pipeline.chosen_clf)}}},
          {"train_auc", pipeline.train_auc}};
}

TrainedPipeline pipeline_from_json(const json& j) {
  check_keys(j,
             {"format_version", "seed", "schema", "steps", "classifier_features", "forest",
              "chosen_cell", "train_auc"},
             "model");
  if (j.at("format_version").get<int>() != 1)
    throw ConfigError("unsupported model format_version");
  TrainedPipeline pipeline;
  pipeline.seed = j.at("seed").get<std::uint64_t>();
  pipeline.input_schema = schema_from_json(j.at("schema"));
  const json& steps = j.at("steps");
  if (!steps.at("norm").is_null()) pipeline.norm = norm_params_from_json(steps.at("norm"));
  if (!steps.at("ft_sites").is_null())
    pipeline.sites_filter = selection_from_json(steps.at("ft_sites"));
  if (!steps.at("ft_noise").is_null())
    pipeline.noise_filter = selection_from_json(steps.at("ft_noise"));
  pipeline.classifier_features =
      j.at("classifier_features").get<std::vector<std::string>>();
  pipeline.forest = forest_from_json(j.at("forest"));
  pipeline.chosen_cell = j.at("chosen_cell").at("index").get<std::size_t>();
  pipeline.chosen_pre = preproc_flags_from_json(j.at("chosen_cell").at("preprocessing"));
  pipeline.chosen_clf = forest_params_from_json(j.at("chosen_cell").at("classifier"));
  pipeline.train_auc = j.at("train_auc").get<double>();
  return pipeline;
}

// ---- reports ----

json to_json(const CVReport& report, const GridSpec& grid) {
  json folds = json::array();
  for (const auto& fr : report.folds) {
    const auto [pre, clf] = grid.cell(fr.winner_cell);
    folds.push_back({{"tag", fr.tag},
                     {"winner_cell", fr.winner_cell},
                     {"winner",
                      {{"preprocessing", to_json(pre)}, {"classifier", to_json(clf)}}},
                     {"inner_mean", fr.inner_mean},
                     {"outer_score", fr.outer_score ? json(*fr.outer_score) : json(nullptr)},
                     {"warnings", fr.warnings}});
  }
  return {{"folds", std::move(folds)},
          {"aggregate", {{"outer_mean", report.outer_mean}, {"outer_std", report.outer_std}}},
          {"final_cell", report.final_cell},
          {"warnings", report.warnings}};
}

json to_json(const LoadReport& report) {
  return {{"rows_read", report.rows_read},
          {"rows_rejected", report.rows_rejected},
          {"reject_reasons", report.reject_reasons}};
}

json to_json(const SynthConfig& cfg) {
  return {{"n_sites", cfg.n_sites},
          {"n_studies", cfg.n_studies},
          {"samples_per_site", cfg.samples_per_site},
          {"n_features", cfg.n_features},
          {"n_informative", cfg.n_informative},
          {"artifact_prevalence", cfg.artifact_prevalence},
          {"site_effect", cfg.site_effect},
          {"study_effect", cfg.study_effect},
          {"artifact_shift", cfg.artifact_shift},
          {"noise_scale", cfg.noise_scale},
          {"seed", cfg.seed},
          {"site_id_offset", cfg.site_id_offset}};
}

json to_json(const GenerationManifest& manifest) {
  json classes = json::array();
  for (const auto& [id, label] : manifest.classes)
    classes.push_back({{"id", id}, {"label", label}});
  return {{"config", to_json(manifest.config)},
          {"informative_features", manifest.informative_features},
          {"site_offsets", manifest.site_offsets},
          {"study_offsets", manifest.study_offsets},
          {"classes", std::move(classes)}};
}

json to_json(const ClusteringScore& score, const std::string& group_by) {
  return {{"group_by", group_by},
          {"k", score.k},
          {"n_runs", score.n_runs},
          {"completeness_mean", score.completeness_mean},
          {"completeness_std", score.completeness_std},
          {"homogeneity_mean", score.homogeneity_mean},
          {"homogeneity_std", score.homogeneity_std}};
}

// ---- config parsing ----

SynthConfig synth_config_from_json(const json& j) {
  check_keys(j,
             {"preset", "n_sites", "n_studies", "samples_per_site", "n_features",
              "n_informative", "artifact_prevalence", "site_effect", "study_effect",
              "artifact_shift", "noise_scale", "seed", "site_id_offset"},
             "synth config");
  SynthConfig cfg;
  if (j.contains("preset")) cfg = synth_preset(j.at("preset").get<std::string>());
  cfg.n_sites = get_or<int>(j, "n_sites", cfg.n_sites);
  cfg.n_studies = get_or<int>(j, "n_studies", cfg.n_studies);
  cfg.samples_per_site = get_or<int>(j, "samples_per_site", cfg.samples_per_site);
  cfg.n_features = get_or<int>(j, "n_features", cfg.n_features);
  cfg.n_informative = get_or<int>(j, "n_informative", cfg.n_informative);
  cfg.artifact_prevalence = get_or<double>(j, "artifact_prevalence", cfg.artifact_prevalence);
  cfg.site_effect = get_or<double>(j, "site_effect", cfg.site_effect);
  cfg.study_effect = get_or<double>(j, "study_effect", cfg.study_effect);
  cfg.artifact_shift = get_or<double>(j, "artifact_shift", cfg.artifact_shift);
  cfg.noise_scale = get_or<double>(j, "noise_scale", cfg.noise_scale);
  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
  cfg.site_id_offset = get_or<int>(j, "site_id_offset", cfg.site_id_offset);
  cfg.validate();
  return cfg;
}

SplitScheme scheme_from_json(const json& j) {
  check_keys(j, {"kind", "k", "shuffled", "seed"}, "split scheme");
  SplitScheme scheme;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "loso")
    scheme.kind = SplitScheme::Kind::loso;
  else if (kind == "kfold")
    scheme.kind = SplitScheme::Kind::kfold;
  else if (kind == "stratified_kfold")
    scheme.kind = SplitScheme::Kind::stratified_kfold;
  else
    throw ConfigError("unknown split scheme kind '" + kind + "'");
  scheme.k = get_or<int>(j, "k", 5);
  scheme.shuffled = get_or<bool>(j, "shuffled", true);
  scheme.seed = get_or<std::uint64_t>(j, "seed", 0);
  scheme.validate();
  return scheme;
}

LabelRule label_rule_from_json(const json& j) {
  check_keys(j, {"kind", "rating_cutoff", "map"}, "label_rule");
  LabelRule rule;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "threshold") {
    rule.kind = LabelRule::Kind::threshold;
    rule.rating_cutoff = get_or<int>(j, "rating_cutoff", 2);
  } else if (kind == "categorical") {
    rule.kind = LabelRule::Kind::categorical;
    rule.category_map = j.at("map").get<std::map<std::string, int>>();
  } else {
    throw ConfigError("unknown label_rule kind '" + kind + "'");
  }
  rule.validate();
  return rule;
}

FtSitesConfig ft_sites_config_from_json(const json& j) {
  check_keys(j, {"margin", "max_remove_fraction", "holdout_fraction", "forest", "seed"},
             "ft_sites config");
  FtSitesConfig cfg;
  cfg.margin = get_or<double>(j, "margin", cfg.margin);
  cfg.max_remove_fraction = get_or<double>(j, "max_remove_fraction", cfg.max_remove_fraction);
  cfg.holdout_fraction = get_or<double>(j, "holdout_fraction", cfg.holdout_fraction);
  if (j.contains("forest")) cfg.forest = forest_params_from_json(j.at("forest"));
  cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
  cfg.validate();
  return cfg;
}

FtNoiseConfig ft_noise_config_from_json(const json& j) {
  check_keys(j,
             {"n_iterations", "n_noise_features", "snr_threshold", "survival_fraction",
              "forest", "seed"},
             "ft_noise config");
  FtNoiseConfig cfg;
  cfg.n_iterations = get_or<int>(j, "n_iterations", cfg.n_iterations);
  cfg.n_noise_features = get_or<int>(j, "n_noise_features", cfg.n_noise_features);
  cfg.snr_threshold = get_or<double>(j, "snr_threshold", cfg.snr_threshold);
  cfg.survival_fraction = get_or<double>(j, "survival_fraction", cfg.survival_fraction);
  if (j.contains("forest")) cfg.forest = forest_params_from_json(j.at("forest"));
  cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
  cfg.validate();
  return cfg;
}

GridSpec grid_from_json(const json& j) {
  check_keys(j, {"preprocessing_cells", "classifier_cells", "ft_sites", "ft_noise"}, "grid");
  GridSpec grid;
  if (j.contains("preprocessing_cells")) {
    const json& cells = j.at("preprocessing_cells");
    if (cells.is_string()) {
      const std::string mode = cells.get<std::string>();
      if (mode == "all")
        grid.preprocessing_cells = all_preprocessing_cells();
      else if (mode == "none")
        grid.preprocessing_cells = {PreprocFlags{}};
      else
        throw ConfigError("preprocessing_cells must be \"all\", \"none\" or a list");
    } else {
      grid.preprocessing_cells.clear();
      for (const auto& cell : cells)
        grid.preprocessing_cells.push_back(preproc_flags_from_json(cell));
    }
  }
  if (j.contains("classifier_cells")) {
    grid.classifier_cells.clear();
    for (const auto& cell : j.at("classifier_cells"))
      grid.classifier_cells.push_back(forest_params_from_json(cell));
  }
  if (j.contains("ft_sites")) grid.ft_sites_cfg = ft_sites_config_from_json(j.at("ft_sites"));
  if (j.contains("ft_noise")) grid.ft_noise_cfg = ft_noise_config_from_json(j.at("ft_noise"));
  grid.validate();
  return grid;
}

KMeansConfig kmeans_config_from_json(const json& j) {
  check_keys(j, {"k", "max_iterations", "rel_tolerance", "n_runs", "standardize", "seed"},
             "kmeans config");
  KMeansConfig cfg;
  cfg.k = get_or<int>(j, "k", cfg.k);
  cfg.max_iterations = get_or<int>(j, "max_iterations", cfg.max_iterations);
  cfg.rel_tolerance = get_or<double>(j, "rel_tolerance", cfg.rel_tolerance);
  cfg.n_runs = get_or<int>(j, "n_runs", cfg.n_runs);
  cfg.standardize = get_or<bool>(j, "standardize", cfg.standardize);
  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
  return cfg;
}

}  // namespace batchqc
