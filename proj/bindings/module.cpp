// Python bindings for the batchqc core. Configs cross the boundary as JSON
// strings (the strict parsers reject unknown keys); results come back as
// native python objects.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "batchqc/cluster.hpp"
#include "batchqc/crossval.hpp"
#include "batchqc/dataset.hpp"
#include "batchqc/metrics.hpp"
#include "batchqc/serialize.hpp"
#include "batchqc/synth.hpp"

namespace py = pybind11;
using namespace batchqc;

namespace {

py::object json_to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null: return py::none();
    case json::value_t::boolean: return py::bool_(j.get<bool>());
    case json::value_t::number_integer: return py::int_(j.get<long long>());
    case json::value_t::number_unsigned: return py::int_(j.get<unsigned long long>());
    case json::value_t::number_float: return py::float_(j.get<double>());
    case json::value_t::string: return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list out;
      for (const auto& item : j) out.append(json_to_py(item));
      return out;
    }
    case json::value_t::object: {
      py::dict out;
      for (const auto& [key, value] : j.items()) out[py::str(key)] = json_to_py(value);
      return out;
    }
    default: return py::none();
  }
}

json parse_config(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

Matrix matrix_from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t d = rows.empty() ? 0 : rows.front().size();
  Matrix m(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) throw DataError("ragged feature rows");
    for (std::size_t j = 0; j < d; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

FeatureTable table_from_arrays(const std::vector<std::string>& ids,
                               const std::vector<std::string>& sites,
                               const std::vector<std::string>& studies,
                               const std::optional<std::vector<int>>& labels,
                               const std::vector<std::string>& feature_names,
                               const std::vector<std::vector<double>>& rows,
                               const std::optional<std::vector<std::string>>& normalized) {
  FeatureTable table;
  table.schema.names = feature_names;
  table.schema.normalized_subset = normalized.value_or(feature_names);
  if (ids.size() != rows.size() || sites.size() != rows.size() ||
      studies.size() != rows.size() || (labels && labels->size() != rows.size()))
    throw DataError("from_arrays: column lengths differ");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Sample s;
    s.id = ids[i];
    s.site = sites[i];
    s.study = studies[i];
    if (labels) s.label = (*labels)[i];
    s.features = rows[i];
    table.samples.push_back(std::move(s));
  }
  table.validate();
  return table;
}

GridSpec grid_for_single_cell(const json& pre, const json& clf) {
  GridSpec grid;
  grid.preprocessing_cells = {preproc_flags_from_json(pre)};
  grid.classifier_cells = {clf.is_null() ? rf_defaults() : forest_params_from_json(clf)};
  return grid;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Batch-effect-aware QC classification toolkit (C++ core)";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<TrainError>(m, "TrainError", PyExc_RuntimeError);

  py::class_<FeatureTable>(m, "FeatureTable")
      .def_static(
          "from_arrays",
          [](const std::vector<std::string>& ids, const std::vector<std::string>& sites,
             const std::vector<std::string>& studies,
             const std::optional<std::vector<int>>& labels,
             const std::vector<std::string>& feature_names,
             const std::vector<std::vector<double>>& rows,
             const std::optional<std::vector<std::string>>& normalized) {
            return table_from_arrays(ids, sites, studies, labels, feature_names, rows,
                                     normalized);
          },
          py::arg("ids"), py::arg("sites"), py::arg("studies"), py::arg("labels"),
          py::arg("feature_names"), py::arg("rows"),
          py::arg("normalized_subset") = std::nullopt)
      .def_static(
          "load_csv",
          [](const std::string& path, const std::optional<std::string>& schema_json,
             const std::optional<std::string>& label_rule_json, bool require_labels,
             bool drop_invalid) {
            std::optional<FeatureSchema> schema;
            if (schema_json)
              schema = schema_from_json(parse_config(*schema_json, "schema"));
            std::optional<LabelRule> rule;
            if (label_rule_json)
              rule = label_rule_from_json(parse_config(*label_rule_json, "label_rule"));
            LoadOptions opts;
            opts.require_labels = require_labels;
            opts.drop_invalid = drop_invalid;
            LoadReport report;
            FeatureTable table = load_csv(path, schema, rule, opts, &report);
            return py::make_tuple(std::move(table), json_to_py(to_json(report)));
          },
          py::arg("path"), py::arg("schema_json") = std::nullopt,
          py::arg("label_rule_json") = std::nullopt, py::arg("require_labels") = true,
          py::arg("drop_invalid") = false)
      .def("save_csv",
           [](const FeatureTable& t, const std::string& path) { save_csv(t, path); })
      .def("__len__", &FeatureTable::size)
      .def_property_readonly("feature_names",
                             [](const FeatureTable& t) { return t.schema.names; })
      .def_property_readonly(
          "normalized_subset",
          [](const FeatureTable& t) { return t.schema.normalized_subset; })
      .def_property_readonly("ids",
                             [](const FeatureTable& t) {
                               std::vector<std::string> out;
                               for (const auto& s : t.samples) out.push_back(s.id);
                               return out;
                             })
      .def_property_readonly("sites",
                             [](const FeatureTable& t) {
                               std::vector<std::string> out;
                               for (const auto& s : t.samples) out.push_back(s.site);
                               return out;
                             })
      .def_property_readonly("studies",
                             [](const FeatureTable& t) {
                               std::vector<std::string> out;
                               for (const auto& s : t.samples) out.push_back(s.study);
                               return out;
                             })
      .def_property_readonly("labels",
                             [](const FeatureTable& t) -> py::object {
                               if (!t.has_labels()) return py::none();
                               return py::cast(t.labels());
                             })
      .def_property_readonly("features",
                             [](const FeatureTable& t) {
                               std::vector<std::vector<double>> out;
                               for (const auto& s : t.samples) out.push_back(s.features);
                               return out;
                             })
      .def("select_rows",
           [](const FeatureTable& t, const std::vector<std::size_t>& rows) {
             return t.select_rows(rows);
           })
      .def("select_features",
           [](const FeatureTable& t, const std::vector<std::string>& keep) {
             return t.select_features(keep);
           });

  m.def(
      "generate",
      [](const std::string& config_json) {
        const SynthConfig cfg =
            synth_config_from_json(parse_config(config_json, "synth config"));
        auto [table, manifest] = generate(cfg);
        return py::make_tuple(std::move(table), json_to_py(to_json(manifest)));
      },
      py::arg("config_json"), "Generate a synthetic multi-site dataset");

  m.def("split_per_study", [](const FeatureTable& table, double train_fraction,
                              std::uint64_t seed) {
    SplitSpec spec;
    spec.kind = SplitSpec::Kind::per_study_fraction;
    spec.train_fraction = train_fraction;
    spec.seed = seed;
    auto [train, test] = split_per_study(table, spec);
    return py::make_tuple(std::move(train), std::move(test));
  });

  m.def("subsample_site_preserving",
        [](const FeatureTable& table, std::size_t target_size, std::uint64_t seed) {
          SplitSpec spec;
          spec.kind = SplitSpec::Kind::site_preserving_subsample;
          spec.target_size = target_size;
          spec.seed = seed;
          return subsample_site_preserving(table, spec);
        });

  m.def(
      "fit_norm",
      [](const FeatureTable& table, const std::string& mode,
         const std::optional<std::vector<std::string>>& subset) {
        NormMode m_;
        if (mode == "center")
          m_ = NormMode::center;
        else if (mode == "scale")
          m_ = NormMode::scale;
        else if (mode == "center_and_scale")
          m_ = NormMode::center_and_scale;
        else
          throw ConfigError("unknown normalization mode '" + mode + "'");
        return to_json(fit_norm(table, m_, subset.value_or(table.schema.normalized_subset)))
            .dump();
      },
      py::arg("table"), py::arg("mode") = "center_and_scale",
      py::arg("feature_subset") = std::nullopt,
      "Fit site-wise robust normalization; returns the params as JSON");

  m.def("apply_norm", [](const std::string& params_json, const FeatureTable& table) {
    return apply_norm(norm_params_from_json(parse_config(params_json, "norm params")),
                      table);
  });

  m.def(
      "ft_sites",
      [](const FeatureTable& table, const std::string& config_json, int workers) {
        const FtSitesConfig cfg =
            ft_sites_config_from_json(parse_config(config_json, "ft_sites config"));
        return json_to_py(to_json(ft_sites(table, cfg, workers)));
      },
      py::arg("table"), py::arg("config_json") = "{}", py::arg("workers") = 1);

  m.def(
      "ft_noise",
      [](const FeatureTable& table, const std::vector<int>& labels,
         const std::string& config_json, int workers) {
        const FtNoiseConfig cfg =
            ft_noise_config_from_json(parse_config(config_json, "ft_noise config"));
        return json_to_py(to_json(ft_noise(table, labels, cfg, workers)));
      },
      py::arg("table"), py::arg("labels"), py::arg("config_json") = "{}",
      py::arg("workers") = 1);

  py::class_<Forest>(m, "Forest")
      .def("predict_proba",
           [](const Forest& f, const std::vector<std::vector<double>>& rows, int workers) {
             return f.predict_proba(matrix_from_rows(rows), workers);
           },
           py::arg("rows"), py::arg("workers") = 1)
      .def("predict_class",
           [](const Forest& f, const std::vector<std::vector<double>>& rows, int workers) {
             return f.predict_class(matrix_from_rows(rows), workers);
           },
           py::arg("rows"), py::arg("workers") = 1)
      .def_property_readonly("importances", [](const Forest& f) { return f.importances; })
      .def_property_readonly("n_classes", [](const Forest& f) { return f.n_classes; })
      .def("to_json", [](const Forest& f) { return to_json(f).dump(); });

  m.def(
      "fit_forest",
      [](const std::vector<std::vector<double>>& rows, const std::vector<int>& y,
         const std::string& params_json, int n_classes, int workers) {
        const ForestParams params =
            forest_params_from_json(parse_config(params_json, "forest params"));
        return fit_forest(matrix_from_rows(rows), y, params, n_classes, workers);
      },
      py::arg("rows"), py::arg("labels"), py::arg("params_json") = "{}",
      py::arg("n_classes") = 0, py::arg("workers") = 1);

  m.def("roc_auc", [](const std::vector<double>& scores, const std::vector<int>& labels) {
    return roc_auc({scores, labels});
  });

  m.def("optimal_threshold",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
          const ThresholdPoint p = optimal_threshold({scores, labels});
          return py::dict(py::arg("threshold") = p.threshold, py::arg("tpr") = p.tpr,
                          py::arg("fpr") = p.fpr);
        });

  m.def("wasserstein_1d", &wasserstein_1d);

  m.def(
      "pairwise_wasserstein",
      [](const std::map<std::string, std::vector<double>>& groups, int workers) {
        const WassersteinMatrix wm = pairwise_wasserstein(groups, workers);
        std::vector<std::vector<double>> matrix(wm.ids.size(),
                                                std::vector<double>(wm.ids.size()));
        for (std::size_t i = 0; i < wm.ids.size(); ++i)
          for (std::size_t j = 0; j < wm.ids.size(); ++j) matrix[i][j] = wm.dist(i, j);
        return py::dict(py::arg("ids") = wm.ids, py::arg("matrix") = matrix,
                        py::arg("mean") = wm.mean, py::arg("std") = wm.stddev);
      },
      py::arg("groups"), py::arg("workers") = 1);

  m.def("homogeneity_completeness",
        [](const std::vector<int>& classes, const std::vector<int>& clusters) {
          return homogeneity_completeness(classes, clusters);
        });

  m.def(
      "kmeans",
      [](const std::vector<std::vector<double>>& rows, int k, std::uint64_t run_seed,
         int max_iterations, double rel_tolerance) {
        KMeansConfig cfg;
        cfg.k = k;
        cfg.max_iterations = max_iterations;
        cfg.rel_tolerance = rel_tolerance;
        double inertia = 0.0;
        const auto assignment = kmeans(matrix_from_rows(rows), cfg, run_seed, &inertia);
        return py::make_tuple(assignment, inertia);
      },
      py::arg("rows"), py::arg("k"), py::arg("run_seed") = 0,
      py::arg("max_iterations") = 300, py::arg("rel_tolerance") = 1e-6);

  m.def(
      "batch_effect_score",
      [](const FeatureTable& table, const std::string& group_by,
         const std::string& config_json, int workers) {
        if (group_by != "site" && group_by != "study")
          throw ConfigError("group_by must be 'site' or 'study'");
        const KMeansConfig cfg =
            kmeans_config_from_json(parse_config(config_json, "kmeans config"));
        const ClusteringScore score = batch_effect_score(
            table, group_by == "site" ? GroupBy::site : GroupBy::study, cfg, workers);
        return json_to_py(to_json(score, group_by));
      },
      py::arg("table"), py::arg("group_by") = "site", py::arg("config_json") = "{}",
      py::arg("workers") = 1);

  py::class_<TrainedPipeline>(m, "TrainedPipeline")
      .def("predict",
           [](const TrainedPipeline& p, const FeatureTable& table, int workers) {
             return p.predict(table, workers);
           },
           py::arg("table"), py::arg("workers") = 1)
      .def("evaluate",
           [](const TrainedPipeline& p, const FeatureTable& table, int workers) {
             const ExternalEval eval = evaluate_external(p, table, workers);
             return py::dict(
                 py::arg("roc_auc") = eval.roc_auc ? py::object(py::float_(*eval.roc_auc))
                                                   : py::object(py::none()),
                 py::arg("probabilities") = eval.probabilities);
           },
           py::arg("table"), py::arg("workers") = 1)
      .def_property_readonly("train_auc",
                             [](const TrainedPipeline& p) { return p.train_auc; })
      .def_property_readonly("classifier_features",
                             [](const TrainedPipeline& p) { return p.classifier_features; })
      .def_property_readonly(
          "selected_steps",
          [](const TrainedPipeline& p) { return p.chosen_pre.step_names(); })
      .def("to_json", [](const TrainedPipeline& p) { return to_json(p).dump(2); })
      .def_static("from_json", [](const std::string& text) {
        return pipeline_from_json(parse_config(text, "model"));
      });

  m.def(
      "train",
      [](const FeatureTable& table, const std::string& config_json, int workers) {
        const json config = parse_config(config_json, "train config");
        check_keys(config, {"inner_scheme", "outer_scheme", "grid", "seed"}, "train config");
        const SplitScheme inner = config.contains("inner_scheme")
                                      ? scheme_from_json(config.at("inner_scheme"))
                                      : SplitScheme{};
        const SplitScheme outer = config.contains("outer_scheme")
                                      ? scheme_from_json(config.at("outer_scheme"))
                                      : default_outer_for(inner);
        const GridSpec grid =
            config.contains("grid") ? grid_from_json(config.at("grid")) : GridSpec{};
        const std::uint64_t seed = config.value("seed", std::uint64_t{0});
        auto [model, report] =
            nested_cv_grid_search(table, outer, inner, grid, seed, workers);
        return py::make_tuple(std::move(model), json_to_py(to_json(report, grid)));
      },
      py::arg("table"), py::arg("config_json") = "{}", py::arg("workers") = 1,
      "Nested-CV grid search; returns (pipeline, cv_report)");

  m.def(
      "fit_single_cell",
      [](const FeatureTable& table, const std::string& preprocessing_json,
         const std::string& classifier_json, std::uint64_t seed, int workers) {
        const GridSpec grid =
            grid_for_single_cell(parse_config(preprocessing_json, "preprocessing"),
                                 classifier_json.empty()
                                     ? json(nullptr)
                                     : parse_config(classifier_json, "classifier"));
        return fit_pipeline(table, 0, grid, seed, workers);
      },
      py::arg("table"), py::arg("preprocessing_json") = "[]",
      py::arg("classifier_json") = "", py::arg("seed") = 0, py::arg("workers") = 1,
      "Fit one preprocessing+classifier cell without cross-validation");
}
