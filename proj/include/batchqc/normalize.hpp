#pragma once

#include <map>
#include <string>
#include <vector>

#include "batchqc/dataset.hpp"

namespace batchqc {

enum class NormMode { center, scale, center_and_scale };

/// Per-(site, feature) robust statistics. location = median, spread = IQR
/// with linear-interpolation quantiles at q*(n-1). A zero IQR is stored as
/// spread 1 with the degenerate flag set, making scaling a no-op for that
/// pair.
struct NormEntry {
  double location = 0.0;
  double spread = 1.0;
  bool degenerate = false;

  bool operator==(const NormEntry&) const = default;
};

struct SiteNormParams {
  NormMode mode = NormMode::center_and_scale;
  double q_low = 0.25;
  double q_high = 0.75;
  std::vector<std::string> feature_subset;
  // site -> feature -> stats
  std::map<std::string, std::map<std::string, NormEntry>> per_site;

  /// Samples from sites absent in per_site get parameters fitted at apply
  /// time: whole_batch fits them on the entire inference batch (so the result
  /// depends on batch composition); per_site fits one set per unknown site.
  enum class Fallback { whole_batch, per_site };
  Fallback fallback = Fallback::whole_batch;
};

/// Sorted-copy linear-interpolation quantile at position q*(n-1).
double quantile_linear(std::vector<double> values, double q);

SiteNormParams fit_norm(const FeatureTable& table, NormMode mode,
                        const std::vector<std::string>& feature_subset);

/// Transforms the subset features of every sample with its site's parameters
/// (center: x - location; scale: x / spread). Other features pass through
/// unchanged. Callers must pass the full inference batch: unknown-site
/// fallback statistics are estimated from it.
FeatureTable apply_norm(const SiteNormParams& params, const FeatureTable& table);

}  // namespace batchqc
