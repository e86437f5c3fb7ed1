#pragma once

#include <string>

#include <json.hpp>

#include "batchqc/cluster.hpp"
#include "batchqc/crossval.hpp"
#include "batchqc/dataset.hpp"
#include "batchqc/synth.hpp"

namespace batchqc {

using json = nlohmann::json;

// ---- artifact serialization (model files, reports) ----

json to_json(const FeatureSchema& schema);
FeatureSchema schema_from_json(const json& j);

json to_json(const SiteNormParams& params);
SiteNormParams norm_params_from_json(const json& j);

json to_json(const ForestParams& params);
ForestParams forest_params_from_json(const json& j);

json to_json(const Forest& forest);
Forest forest_from_json(const json& j);

json to_json(const SelectionResult& result);
SelectionResult selection_from_json(const json& j);

json to_json(const PreprocFlags& flags);
PreprocFlags preproc_flags_from_json(const json& j);

/// Model file, format_version 1.
json to_json(const TrainedPipeline& pipeline);
TrainedPipeline pipeline_from_json(const json& j);

json to_json(const CVReport& report, const GridSpec& grid);

json to_json(const LoadReport& report);
json to_json(const SynthConfig& cfg);
json to_json(const GenerationManifest& manifest);
json to_json(const ClusteringScore& score, const std::string& group_by);

// ---- config parsing (strict: unknown keys rejected) ----

/// Throws ConfigError naming the first unknown key in j.
void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& context);

SynthConfig synth_config_from_json(const json& j);
SplitScheme scheme_from_json(const json& j);
LabelRule label_rule_from_json(const json& j);
GridSpec grid_from_json(const json& j);
FtSitesConfig ft_sites_config_from_json(const json& j);
FtNoiseConfig ft_noise_config_from_json(const json& j);
KMeansConfig kmeans_config_from_json(const json& j);

json load_json_file(const std::string& path);
void write_json_file(const json& j, const std::string& path);

}  // namespace batchqc
