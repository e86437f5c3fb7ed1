#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "batchqc/common.hpp"

namespace batchqc {

/// Ordered feature names plus the subset eligible for site-wise
/// centering/scaling.
struct FeatureSchema {
  std::vector<std::string> names;
  std::vector<std::string> normalized_subset;

  /// Throws DataError if names are empty/duplicated or the normalized subset
  /// is not contained in names.
  void validate() const;

  std::optional<std::size_t> index_of(const std::string& name) const;
  bool is_normalized(const std::string& name) const;
};

/// One row of a feature table. label semantics: 1 = artifacted (exclude),
/// 0 = accept. raw_rating keeps the original 0-4 rating when one was given.
struct Sample {
  std::string id;
  std::string site;
  std::string study;
  std::optional<int> label;
  std::optional<int> raw_rating;
  std::vector<double> features;

  bool operator==(const Sample&) const = default;
};

struct FeatureTable {
  FeatureSchema schema;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  std::size_t n_features() const { return schema.names.size(); }

  /// Checks feature-vector lengths, finiteness and id uniqueness.
  void validate() const;

  Matrix feature_matrix() const;
  /// All labels; throws DataError if any sample lacks one.
  std::vector<int> labels() const;
  bool has_labels() const;

  std::vector<std::string> distinct_sites() const;   // sorted
  std::vector<std::string> distinct_studies() const; // sorted
  /// Row indices grouped by site/study, keys sorted, indices in row order.
  std::map<std::string, std::vector<std::size_t>> rows_by_site() const;
  std::map<std::string, std::vector<std::size_t>> rows_by_study() const;

  FeatureTable select_rows(const std::vector<std::size_t>& rows) const;
  /// Projects onto the named feature columns (in the given order). The
  /// normalized subset is intersected accordingly.
  FeatureTable select_features(const std::vector<std::string>& keep) const;
};

/// How a rating column is turned into the binary artifact label.
struct LabelRule {
  enum class Kind { threshold, categorical };
  Kind kind = Kind::threshold;
  // threshold: rating > cutoff means good (label 0); rating <= cutoff -> 1.
  int rating_cutoff = 2;
  // categorical: every category appearing in the data must be mapped to 0/1.
  std::map<std::string, int> category_map;

  void validate() const;
};

struct SplitSpec {
  enum class Kind { per_study_fraction, site_preserving_subsample };
  Kind kind = Kind::per_study_fraction;
  double train_fraction = 0.6;
  std::size_t target_size = 0;
  std::uint64_t seed = 0;
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t rows_rejected = 0;
  std::vector<std::string> reject_reasons;  // "<id or row#>: <reason>"
};

struct LoadOptions {
  // false: a bad cell rejects the whole load. true: the row is dropped and
  // counted in the report instead.
  bool drop_invalid = false;
  // When true every row must end up with a label.
  bool require_labels = true;
};

/// Reads the canonical CSV format: header with id,site,study, optionally
/// rating (0-4 or category) and/or label (0/1), plus all schema feature
/// columns matched by name in any order. Unknown columns are ignored.
///
/// If schema is nullopt it is inferred: every non-reserved column becomes a
/// feature and the normalized subset is the full set.
FeatureTable load_csv(const std::string& path,
                      const std::optional<FeatureSchema>& schema,
                      const std::optional<LabelRule>& label_rule,
                      const LoadOptions& options = {},
                      LoadReport* report = nullptr);

void save_csv(const FeatureTable& table, const std::string& path);

/// 60/40-style split: per study, round-half-up(train_fraction * n) rows go to
/// train (chosen uniformly by seed), the rest to test. Studies whose test
/// share rounds to zero appear only in train.
std::pair<FeatureTable, FeatureTable> split_per_study(const FeatureTable& table,
                                                      const SplitSpec& spec);

/// Subsample of exactly target_size rows whose per-site proportions follow the
/// input as closely as largest-remainder apportionment allows. Remainder ties
/// go to the larger site, then to the lexicographically smaller site id.
FeatureTable subsample_site_preserving(const FeatureTable& table, const SplitSpec& spec);

}  // namespace batchqc
