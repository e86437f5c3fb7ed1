// batchqc command-line tool: synth / train / evaluate / predict / diagnose.
//
// Exit codes: 0 success, 2 configuration error, 3 data or schema error,
// 4 training or numeric failure. BATCHQC_LOG controls log verbosity.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "batchqc/cluster.hpp"
#include "batchqc/crossval.hpp"
#include "batchqc/dataset.hpp"
#include "batchqc/metrics.hpp"
#include "batchqc/serialize.hpp"
#include "batchqc/synth.hpp"

namespace fs = std::filesystem;
using namespace batchqc;

namespace {

struct CommonArgs {
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  int workers = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--out", args.out, "Output directory (created if missing)");
  cmd->add_option("--seed", args.seed, "Master seed, overrides any config value");
  cmd->add_option("--workers", args.workers,
                  "Worker threads; an execution hint that never changes results")
      ->check(CLI::PositiveNumber);
}

fs::path ensure_out_dir(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + out + "'");
  return dir;
}

FeatureSchema resolve_schema(const json& config) {
  if (config.at("schema").is_string())
    return schema_from_json(load_json_file(config.at("schema").get<std::string>()));
  return schema_from_json(config.at("schema"));
}

FeatureTable load_dataset(const std::string& path, const std::optional<FeatureSchema>& schema,
                          const std::optional<LabelRule>& rule, bool require_labels,
                          bool drop_invalid, const fs::path& out_dir) {
  LoadOptions opts;
  opts.require_labels = require_labels;
  opts.drop_invalid = drop_invalid;
  LoadReport report;
  FeatureTable table = load_csv(path, schema, rule, opts, &report);
  write_json_file(to_json(report), (out_dir / "load_report.json").string());
  if (report.rows_rejected > 0)
    log_warn(std::to_string(report.rows_rejected) + " rows rejected while loading " + path);
  return table;
}

// ---- synth ----

int cmd_synth(const std::string& config_path, const std::string& preset,
              const CommonArgs& common) {
  SynthConfig cfg;
  if (!config_path.empty())
    cfg = synth_config_from_json(load_json_file(config_path));
  else if (!preset.empty())
    cfg = synth_preset(preset);
  if (common.seed) cfg.seed = *common.seed;
  const fs::path out_dir = ensure_out_dir(common.out);

  const auto [table, manifest] = generate(cfg);
  save_csv(table, (out_dir / "dataset.csv").string());
  write_json_file(to_json(manifest), (out_dir / "manifest.json").string());
  write_json_file(to_json(table.schema), (out_dir / "schema.json").string());
  log_info("wrote " + std::to_string(table.size()) + " samples to " +
           (out_dir / "dataset.csv").string());
  return 0;
}

// ---- train ----

json table5_summary(const TrainedPipeline& model, const CVReport& report,
                    const FeatureTable& table) {
  json per_step = json::array();
  const auto normalized_count = [&](const std::vector<RemovedFeature>& removed) {
    return std::count_if(removed.begin(), removed.end(), [&](const RemovedFeature& r) {
      return table.schema.is_normalized(r.name);
    });
  };
  for (const std::string& step : model.chosen_pre.step_names()) {
    std::size_t discarded = 0;
    long discarded_normalized = 0;
    if (step == "ft_sites" && model.sites_filter) {
      discarded = model.sites_filter->removed.size();
      discarded_normalized = normalized_count(model.sites_filter->removed);
    } else if (step == "ft_noise" && model.noise_filter) {
      discarded = model.noise_filter->removed.size();
      discarded_normalized = normalized_count(model.noise_filter->removed);
    }
    per_step.push_back({{"step", step},
                        {"n_discarded", discarded},
                        {"n_discarded_normalized", discarded_normalized}});
  }
  return {{"selected_steps", model.chosen_pre.step_names()},
          {"per_step", std::move(per_step)},
          {"n_features_in", table.n_features()},
          {"n_features_used", model.classifier_features.size()},
          {"outer_cv", {{"mean", report.outer_mean}, {"std", report.outer_std}}},
          {"classifier", to_json(model.chosen_clf)},
          {"train_auc", model.train_auc},
          {"seed", model.seed}};
}

int cmd_train(const std::string& config_path, const CommonArgs& common) {
  const json config = load_json_file(config_path);
  check_keys(config,
             {"dataset", "schema", "label_rule", "inner_scheme", "outer_scheme", "grid",
              "seed", "workers", "out", "drop_invalid"},
             "train config");
  const std::string dataset = config.at("dataset").get<std::string>();
  const std::optional<FeatureSchema> schema =
      config.contains("schema") ? std::optional<FeatureSchema>(resolve_schema(config))
                                : std::nullopt;
  const std::optional<LabelRule> rule =
      config.contains("label_rule")
          ? std::optional<LabelRule>(label_rule_from_json(config.at("label_rule")))
          : std::nullopt;
  const SplitScheme inner = config.contains("inner_scheme")
                                ? scheme_from_json(config.at("inner_scheme"))
                                : SplitScheme{};
  const SplitScheme outer = config.contains("outer_scheme")
                                ? scheme_from_json(config.at("outer_scheme"))
                                : default_outer_for(inner);
  const GridSpec grid =
      config.contains("grid") ? grid_from_json(config.at("grid")) : GridSpec{};
  std::uint64_t seed = config.value("seed", std::uint64_t{0});
  if (common.seed) seed = *common.seed;
  int workers = config.value("workers", common.workers);
  if (common.workers != 1) workers = common.workers;
  const std::string out = config.value("out", common.out);
  const fs::path out_dir = ensure_out_dir(out);

  const FeatureTable table = load_dataset(dataset, schema, rule, true,
                                          config.value("drop_invalid", false), out_dir);
  const auto [model, report] = nested_cv_grid_search(table, outer, inner, grid, seed, workers);

  write_json_file(to_json(model), (out_dir / "model.json").string());
  write_json_file(to_json(report, grid), (out_dir / "cv_report.json").string());
  write_json_file(table5_summary(model, report, table),
                  (out_dir / "training_summary.json").string());
  log_info("outer CV ROC-AUC " + format_double(report.outer_mean) + " +- " +
           format_double(report.outer_std));
  return 0;
}

// ---- evaluate ----

int cmd_evaluate(const std::string& model_path, const std::vector<std::string>& datasets,
                 const CommonArgs& common) {
  const TrainedPipeline model = pipeline_from_json(load_json_file(model_path));
  const fs::path out_dir = ensure_out_dir(common.out);
  json results = json::array();
  for (const std::string& path : datasets) {
    LoadOptions opts;
    LoadReport report;
    const FeatureTable table = load_csv(path, std::nullopt, std::nullopt, opts, &report);
    const ExternalEval eval = evaluate_external(model, table, common.workers);
    json row = {{"dataset", path},
                {"n", table.size()},
                {"roc_auc", eval.roc_auc ? json(*eval.roc_auc) : json("undefined")}};
    if (!eval.roc_auc)
      log_warn(path + ": single-class labels, ROC-AUC undefined");

    json per_site = json::object();
    for (const auto& [site, rows] : table.rows_by_site()) {
      ScoredLabels scored;
      bool has0 = false, has1 = false;
      for (const std::size_t r : rows) {
        scored.scores.push_back(eval.probabilities[r]);
        scored.labels.push_back(*table.samples[r].label);
        (scored.labels.back() == 1 ? has1 : has0) = true;
      }
      if (has0 && has1) per_site[site] = roc_auc(scored);
    }
    row["per_site_auc"] = std::move(per_site);
    results.push_back(std::move(row));
  }
  write_json_file(json{{"model", model_path}, {"results", std::move(results)}},
                  (out_dir / "evaluation.json").string());
  return 0;
}

// ---- predict ----

int cmd_predict(const std::string& model_path, const std::string& dataset,
                const CommonArgs& common) {
  const TrainedPipeline model = pipeline_from_json(load_json_file(model_path));
  LoadOptions opts;
  opts.require_labels = false;
  const FeatureTable table = load_csv(dataset, std::nullopt, std::nullopt, opts);
  const std::vector<double> proba = model.predict(table, common.workers);

  const fs::path out_dir = ensure_out_dir(common.out);
  const fs::path out_path = out_dir / "predictions.csv";
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot write '" + out_path.string() + "'");
  out << "id,probability\n";
  for (std::size_t i = 0; i < table.size(); ++i)
    out << table.samples[i].id << ',' << format_double(proba[i]) << '\n';
  return 0;
}

// ---- diagnose ----

std::vector<std::string> top_groups(const std::map<std::string, std::vector<std::size_t>>& groups,
                                    std::size_t top_n) {
  std::vector<std::string> names;
  for (const auto& [name, rows] : groups) names.push_back(name);
  std::sort(names.begin(), names.end(), [&](const std::string& a, const std::string& b) {
    if (groups.at(a).size() != groups.at(b).size())
      return groups.at(a).size() > groups.at(b).size();
    return a < b;
  });
  if (names.size() > top_n) names.resize(top_n);
  std::sort(names.begin(), names.end());
  return names;
}

int cmd_diagnose(const std::string& model_path, const std::string& dataset,
                 const std::string& group_by, std::size_t top_n, int kmeans_runs,
                 const CommonArgs& common) {
  if (group_by != "site" && group_by != "study")
    throw ConfigError("--group-by must be 'site' or 'study'");
  LoadOptions opts;
  opts.require_labels = false;
  const FeatureTable table = load_csv(dataset, std::nullopt, std::nullopt, opts);
  const fs::path out_dir = ensure_out_dir(common.out);

  KMeansConfig kcfg;
  kcfg.n_runs = kmeans_runs;
  kcfg.seed = common.seed.value_or(0);

  const auto groups =
      group_by == "site" ? table.rows_by_site() : table.rows_by_study();
  if (groups.size() < 2)
    throw DataError("diagnose: fewer than 2 " + group_by + " groups in " + dataset);

  // (a) Table 2/3-shaped clustering scores for both grouping dimensions.
  json batch_effect = {{"site", nullptr}, {"study", nullptr}};
  std::ofstream csv(out_dir / "batch_effect.csv");
  csv << "group_by,k,n_runs,completeness_mean,completeness_std,homogeneity_mean,"
         "homogeneity_std\n";
  for (const auto& [name, dimension] :
       {std::pair{std::string("site"), GroupBy::site},
        std::pair{std::string("study"), GroupBy::study}}) {
    const auto dim_groups =
        dimension == GroupBy::site ? table.rows_by_site() : table.rows_by_study();
    if (dim_groups.size() < 2) {
      log_warn("diagnose: fewer than 2 " + name + " groups; skipping its clustering score");
      continue;
    }
    const ClusteringScore score = batch_effect_score(table, dimension, kcfg, common.workers);
    batch_effect[name] = to_json(score, name);
    csv << name << ',' << score.k << ',' << score.n_runs << ','
        << format_double(score.completeness_mean) << ','
        << format_double(score.completeness_std) << ','
        << format_double(score.homogeneity_mean) << ','
        << format_double(score.homogeneity_std) << '\n';
  }
  csv.close();

  json bundle = {{"dataset", dataset},
                 {"group_by", group_by},
                 {"batch_effect", std::move(batch_effect)},
                 {"groups", json::array()},
                 {"wasserstein", nullptr}};

  // (b) Model-based prediction diagnostics on the N most represented groups.
  if (!model_path.empty()) {
    const TrainedPipeline model = pipeline_from_json(load_json_file(model_path));
    const std::vector<double> proba = model.predict(table, common.workers);
    const auto selected = top_groups(groups, top_n);

    std::map<std::string, std::vector<double>> score_groups;
    for (const std::string& name : selected) {
      const auto& rows = groups.at(name);
      json entry = {{"id", name}, {"n", rows.size()}};
      std::vector<double> scores;
      ScoredLabels scored;
      bool labeled = true;
      bool has0 = false, has1 = false;
      for (const std::size_t r : rows) {
        scores.push_back(proba[r]);
        if (table.samples[r].label) {
          scored.scores.push_back(proba[r]);
          scored.labels.push_back(*table.samples[r].label);
          (*table.samples[r].label == 1 ? has1 : has0) = true;
        } else {
          labeled = false;
        }
      }
      entry["scores"] = scores;
      if (labeled && has0 && has1) {
        const ThresholdPoint point = optimal_threshold(scored);
        entry["optimal_threshold"] = {
            {"threshold", point.threshold}, {"tpr", point.tpr}, {"fpr", point.fpr}};
      } else {
        entry["optimal_threshold"] = nullptr;
        log_warn("diagnose: group '" + name +
                 "' lacks both classes; optimal threshold undefined");
      }
      bundle["groups"].push_back(std::move(entry));
      score_groups[name] = std::move(scores);
    }

    if (score_groups.size() >= 2) {
      const WassersteinMatrix wm = pairwise_wasserstein(score_groups, common.workers);
      json matrix = json::array();
      for (std::size_t i = 0; i < wm.ids.size(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < wm.ids.size(); ++j) row.push_back(wm.dist(i, j));
        matrix.push_back(std::move(row));
      }
      bundle["wasserstein"] = {{"ids", wm.ids},
                               {"matrix", std::move(matrix)},
                               {"mean", wm.mean},
                               {"std", wm.stddev}};

      std::ofstream wcsv(out_dir / "wasserstein.csv");
      wcsv << "group";
      for (const auto& id : wm.ids) wcsv << ',' << id;
      wcsv << '\n';
      for (std::size_t i = 0; i < wm.ids.size(); ++i) {
        wcsv << wm.ids[i];
        for (std::size_t j = 0; j < wm.ids.size(); ++j)
          wcsv << ',' << format_double(wm.dist(i, j));
        wcsv << '\n';
      }
    }
  }

  write_json_file(bundle, (out_dir / "diagnostics.json").string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch-effect-aware QC classification toolkit for tabular image-quality "
               "metrics"};
  app.require_subcommand(1);

  CommonArgs synth_args, train_args, eval_args, predict_args, diagnose_args;

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic multi-site dataset");
  std::string synth_config, synth_preset_name;
  synth_cmd->add_option("--config", synth_config, "Synth config JSON");
  synth_cmd->add_option("--preset", synth_preset_name, "abide-like | cati-like");
  add_common(synth_cmd, synth_args);

  auto* train_cmd = app.add_subcommand("train", "Nested-CV grid-search training");
  std::string train_config;
  train_cmd->add_option("--config", train_config, "Training config JSON")->required();
  add_common(train_cmd, train_args);

  auto* eval_cmd = app.add_subcommand("evaluate", "Score a model on labeled datasets");
  std::string eval_model;
  std::vector<std::string> eval_data;
  eval_cmd->add_option("--model", eval_model, "model.json path")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset CSV (repeatable)")->required();
  add_common(eval_cmd, eval_args);

  auto* predict_cmd = app.add_subcommand("predict", "Write per-sample probabilities");
  std::string predict_model, predict_data;
  predict_cmd->add_option("--model", predict_model, "model.json path")->required();
  predict_cmd->add_option("--data", predict_data, "Dataset CSV")->required();
  add_common(predict_cmd, predict_args);

  auto* diagnose_cmd =
      app.add_subcommand("diagnose", "Batch-effect scores and prediction diagnostics");
  std::string diag_model, diag_data, diag_group = "site";
  std::size_t diag_top = 5;
  int diag_runs = 1000;
  diagnose_cmd->add_option("--model", diag_model, "model.json path (optional)");
  diagnose_cmd->add_option("--data", diag_data, "Dataset CSV")->required();
  diagnose_cmd->add_option("--group-by", diag_group, "site | study");
  diagnose_cmd->add_option("--top", diag_top, "Number of most represented groups (default 5)");
  diagnose_cmd->add_option("--kmeans-runs", diag_runs, "K-means repetitions (default 1000)");
  add_common(diagnose_cmd, diagnose_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth_config, synth_preset_name, synth_args);
    if (train_cmd->parsed()) return cmd_train(train_config, train_args);
    if (eval_cmd->parsed()) return cmd_evaluate(eval_model, eval_data, eval_args);
    if (predict_cmd->parsed()) return cmd_predict(predict_model, predict_data, predict_args);
    if (diagnose_cmd->parsed())
      return cmd_diagnose(diag_model, diag_data, diag_group, diag_top, diag_runs,
                          diagnose_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const TrainError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
