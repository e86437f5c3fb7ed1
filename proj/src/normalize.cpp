#include "batchqc/normalize.hpp"

#include <algorithm>
#include <cmath>

namespace batchqc {

double quantile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  if (lo == hi) return values[lo];
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

std::map<std::string, NormEntry> fit_group(const FeatureTable& table,
                                           const std::vector<std::size_t>& rows,
                                           const std::vector<std::string>& subset,
                                           const std::vector<std::size_t>& subset_idx,
                                           double q_low, double q_high) {
  std::map<std::string, NormEntry> out;
  std::vector<double> column(rows.size());
  for (std::size_t f = 0; f < subset.size(); ++f) {
    for (std::size_t r = 0; r < rows.size(); ++r)
      column[r] = table.samples[rows[r]].features[subset_idx[f]];
    NormEntry e;
    e.location = quantile_linear(column, 0.5);
    const double spread = quantile_linear(column, q_high) - quantile_linear(column, q_low);
    if (spread > 0.0) {
      e.spread = spread;
    } else {
      e.spread = 1.0;
      e.degenerate = true;
    }
    out[subset[f]] = e;
  }
  return out;
}

std::vector<std::size_t> resolve_subset(const FeatureSchema& schema,
                                        const std::vector<std::string>& subset) {
  std::vector<std::size_t> idx;
  idx.reserve(subset.size());
  for (const auto& name : subset) {
    const auto i = schema.index_of(name);
    if (!i) throw DataError("normalize: feature '" + name + "' not in schema");
    idx.push_back(*i);
  }
  return idx;
}

}  // namespace

SiteNormParams fit_norm(const FeatureTable& table, NormMode mode,
                        const std::vector<std::string>& feature_subset) {
  if (table.samples.empty()) throw DataError("fit_norm: empty table");
  SiteNormParams params;
  params.mode = mode;
  params.feature_subset = feature_subset;
  const auto subset_idx = resolve_subset(table.schema, feature_subset);
  for (const auto& [site, rows] : table.rows_by_site())
    params.per_site[site] =
        fit_group(table, rows, feature_subset, subset_idx, params.q_low, params.q_high);
  return params;
}

FeatureTable apply_norm(const SiteNormParams& params, const FeatureTable& table) {
  const auto subset_idx = resolve_subset(table.schema, params.feature_subset);

  // Fallback statistics for sites unseen at fit time, estimated lazily from
  // the inference batch itself.
  std::map<std::string, std::map<std::string, NormEntry>> fallback;
  const auto fallback_for = [&](const std::string& site)
      -> const std::map<std::string, NormEntry>& {
    if (params.fallback == SiteNormParams::Fallback::whole_batch) {
      auto it = fallback.find("");
      if (it == fallback.end()) {
        std::vector<std::size_t> all(table.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        it = fallback
                 .emplace("", fit_group(table, all, params.feature_subset, subset_idx,
                                        params.q_low, params.q_high))
                 .first;
      }
      return it->second;
    }
    auto it = fallback.find(site);
    if (it == fallback.end()) {
      const auto rows = table.rows_by_site().at(site);
      it = fallback
               .emplace(site, fit_group(table, rows, params.feature_subset, subset_idx,
                                        params.q_low, params.q_high))
               .first;
    }
    return it->second;
  };

  const bool do_center =
      params.mode == NormMode::center || params.mode == NormMode::center_and_scale;
  const bool do_scale =
      params.mode == NormMode::scale || params.mode == NormMode::center_and_scale;

  FeatureTable out = table;
  for (auto& sample : out.samples) {
    const auto site_it = params.per_site.find(sample.site);
    const auto& stats =
        site_it != params.per_site.end() ? site_it->second : fallback_for(sample.site);
    for (std::size_t f = 0; f < subset_idx.size(); ++f) {
      const NormEntry& e = stats.at(params.feature_subset[f]);
      double v = sample.features[subset_idx[f]];
      if (do_center) v -= e.location;
      if (do_scale) v /= e.spread;
      sample.features[subset_idx[f]] = v;
    }
  }
  return out;
}

}  // namespace batchqc
