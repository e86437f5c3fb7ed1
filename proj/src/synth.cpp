#include "batchqc/synth.hpp"

#include <cmath>

#include "batchqc/rng.hpp"

namespace batchqc {

namespace {

constexpr std::uint64_t kTagSiteOffset = 0x51;
constexpr std::uint64_t kTagStudyOffset = 0x52;
constexpr std::uint64_t kTagSample = 0x53;

std::string padded(const std::string& prefix, int i, int width) {
  std::string digits = std::to_string(i);
  while (static_cast<int>(digits.size()) < width) digits.insert(digits.begin(), '0');
  return prefix + digits;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_sites < 1 || n_studies < 1 || samples_per_site < 1)
    throw ConfigError("synth: n_sites, n_studies, samples_per_site must be >= 1");
  if (n_features < 1) throw ConfigError("synth: n_features must be >= 1");
  if (n_informative < 1 || n_informative > n_features)
    throw ConfigError("synth: n_informative must be in [1, n_features]");
  if (artifact_prevalence <= 0.0 || artifact_prevalence >= 1.0)
    throw ConfigError("synth: artifact_prevalence must be in (0,1)");
  if (site_effect < 0.0 || study_effect < 0.0)
    throw ConfigError("synth: effect strengths must be >= 0");
  if (artifact_shift <= 0.0) throw ConfigError("synth: artifact_shift must be > 0");
  if (noise_scale <= 0.0) throw ConfigError("synth: noise_scale must be > 0");
  if (site_id_offset < 0) throw ConfigError("synth: site_id_offset must be >= 0");
}

std::pair<FeatureTable, GenerationManifest> generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t d = static_cast<std::size_t>(cfg.n_features);

  FeatureTable table;
  for (int j = 0; j < cfg.n_features; ++j)
    table.schema.names.push_back(padded("f", j, 2));
  table.schema.normalized_subset = table.schema.names;

  GenerationManifest manifest;
  manifest.config = cfg;
  for (int j = 0; j < cfg.n_informative; ++j)
    manifest.informative_features.push_back(table.schema.names[static_cast<std::size_t>(j)]);

  std::vector<std::string> site_names(static_cast<std::size_t>(cfg.n_sites));
  std::vector<std::string> study_names(static_cast<std::size_t>(cfg.n_sites));
  std::vector<std::vector<double>> site_off(static_cast<std::size_t>(cfg.n_sites));
  std::vector<std::vector<double>> study_off_by_site(static_cast<std::size_t>(cfg.n_sites));

  std::map<int, std::vector<double>> study_offsets;
  for (int s = 0; s < cfg.n_sites; ++s) {
    const int global_site = s + cfg.site_id_offset;
    const int study = global_site % cfg.n_studies;
    site_names[static_cast<std::size_t>(s)] = padded("site", global_site, 2);
    study_names[static_cast<std::size_t>(s)] = padded("study", study, 2);

    Rng site_rng(mix(cfg.seed, kTagSiteOffset, static_cast<std::uint64_t>(global_site)));
    auto& so = site_off[static_cast<std::size_t>(s)];
    so.resize(d);
    for (double& v : so) v = site_rng.next_normal();
    manifest.site_offsets[site_names[static_cast<std::size_t>(s)]] = so;

    auto it = study_offsets.find(study);
    if (it == study_offsets.end()) {
      Rng study_rng(mix(cfg.seed, kTagStudyOffset, static_cast<std::uint64_t>(study)));
      std::vector<double> off(d);
      for (double& v : off) v = study_rng.next_normal();
      it = study_offsets.emplace(study, std::move(off)).first;
      manifest.study_offsets[study_names[static_cast<std::size_t>(s)]] = it->second;
    }
    study_off_by_site[static_cast<std::size_t>(s)] = it->second;
  }

  const int total = cfg.n_sites * cfg.samples_per_site;
  const int id_width = static_cast<int>(std::to_string(total).size());
  table.samples.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) {
    const std::size_t s = static_cast<std::size_t>(i / cfg.samples_per_site);
    Rng rng(mix(cfg.seed, kTagSample,
                static_cast<std::uint64_t>(i / cfg.samples_per_site + cfg.site_id_offset),
                static_cast<std::uint64_t>(i % cfg.samples_per_site)));
    Sample sample;
    sample.id = padded("s", i, id_width);
    sample.site = site_names[s];
    sample.study = study_names[s];
    sample.label = rng.next_double() < cfg.artifact_prevalence ? 1 : 0;
    sample.features.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      double v = cfg.site_effect * site_off[s][j] + cfg.study_effect * study_off_by_site[s][j] +
                 cfg.noise_scale * rng.next_normal();
      if (*sample.label == 1 && j < static_cast<std::size_t>(cfg.n_informative))
        v += cfg.artifact_shift;
      sample.features[j] = v;
    }
    manifest.classes.emplace_back(sample.id, *sample.label);
    table.samples.push_back(std::move(sample));
  }
  return {std::move(table), std::move(manifest)};
}

SynthConfig synth_preset(const std::string& name) {
  SynthConfig cfg;
  if (name == "abide-like") {
    cfg.n_sites = 6;
    cfg.n_studies = 1;
    cfg.samples_per_site = 100;
    cfg.site_effect = 3.0;
    cfg.study_effect = 0.0;
  } else if (name == "cati-like") {
    cfg.n_sites = 20;
    cfg.n_studies = 8;
    cfg.samples_per_site = 30;
    cfg.site_effect = 0.8;
    cfg.study_effect = 0.5;
  } else {
    throw ConfigError("unknown synth preset '" + name + "'");
  }
  return cfg;
}

}  // namespace batchqc
