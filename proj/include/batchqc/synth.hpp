#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "batchqc/dataset.hpp"

namespace batchqc {

/// Additive-Gaussian multi-site generator:
///   x = site_effect * site_offset + study_effect * study_offset
///     + artifact_shift * label * informative_mask + noise_scale * noise
/// with offsets drawn once per site/study and noise independent per sample.
/// Sites are assigned to studies round-robin. Site-wise centering is exactly
/// the right correction in this family, which keeps pipeline behavior
/// interpretable in tests.
struct SynthConfig {
  int n_sites = 10;
  int n_studies = 4;
  int samples_per_site = 50;
  int n_features = 69;
  int n_informative = 10;  // the first n_informative features carry the label shift
  double artifact_prevalence = 0.13;
  double site_effect = 1.0;      // alpha
  double study_effect = 0.5;     // beta
  double artifact_shift = 1.0;   // gamma
  double noise_scale = 1.0;      // sigma
  std::uint64_t seed = 0;
  // Offset site/study numbering, letting one config produce disjoint site
  // sets for unseen-site experiments.
  int site_id_offset = 0;

  void validate() const;
};

struct GenerationManifest {
  SynthConfig config;
  std::vector<std::string> informative_features;
  std::map<std::string, std::vector<double>> site_offsets;
  std::map<std::string, std::vector<double>> study_offsets;
  // per-sample ground truth: (id, label)
  std::vector<std::pair<std::string, int>> classes;
};

std::pair<FeatureTable, GenerationManifest> generate(const SynthConfig& cfg);

/// Named presets mirroring the two training-data archetypes used by the
/// trend tests: "abide-like" (few sites, one study, strong site effect) and
/// "cati-like" (many sites and studies, moderate site effect).
SynthConfig synth_preset(const std::string& name);

}  // namespace batchqc
