#include "batchqc/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "batchqc/rng.hpp"

namespace batchqc {

void FeatureSchema::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& name : names) {
    if (name.empty()) throw DataError("schema: empty feature name");
    if (!seen.insert(name).second)
      throw DataError("schema: duplicate feature name '" + name + "'");
  }
  for (const auto& name : normalized_subset) {
    if (!seen.count(name))
      throw DataError("schema: normalized feature '" + name + "' not in feature list");
  }
}

std::optional<std::size_t> FeatureSchema::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

bool FeatureSchema::is_normalized(const std::string& name) const {
  return std::find(normalized_subset.begin(), normalized_subset.end(), name) !=
         normalized_subset.end();
}

void FeatureTable::validate() const {
  schema.validate();
  std::unordered_set<std::string> ids;
  for (const auto& s : samples) {
    if (s.features.size() != schema.names.size())
      throw DataError("sample '" + s.id + "': feature vector length " +
                      std::to_string(s.features.size()) + " != schema size " +
                      std::to_string(schema.names.size()));
    for (const double v : s.features)
      if (!std::isfinite(v)) throw DataError("sample '" + s.id + "': non-finite feature");
    if (!ids.insert(s.id).second) throw DataError("duplicate sample id '" + s.id + "'");
  }
}

Matrix FeatureTable::feature_matrix() const {
  Matrix m(samples.size(), schema.names.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = 0; j < schema.names.size(); ++j) m(i, j) = samples[i].features[j];
  return m;
}

std::vector<int> FeatureTable::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.label) throw DataError("sample '" + s.id + "' has no label");
    out.push_back(*s.label);
  }
  return out;
}

bool FeatureTable::has_labels() const {
  return std::all_of(samples.begin(), samples.end(),
                     [](const Sample& s) { return s.label.has_value(); });
}

std::vector<std::string> FeatureTable::distinct_sites() const {
  std::set<std::string> s;
  for (const auto& row : samples) s.insert(row.site);
  return {s.begin(), s.end()};
}

std::vector<std::string> FeatureTable::distinct_studies() const {
  std::set<std::string> s;
  for (const auto& row : samples) s.insert(row.study);
  return {s.begin(), s.end()};
}

std::map<std::string, std::vector<std::size_t>> FeatureTable::rows_by_site() const {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < samples.size(); ++i) out[samples[i].site].push_back(i);
  return out;
}

std::map<std::string, std::vector<std::size_t>> FeatureTable::rows_by_study() const {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < samples.size(); ++i) out[samples[i].study].push_back(i);
  return out;
}

FeatureTable FeatureTable::select_rows(const std::vector<std::size_t>& rows) const {
  FeatureTable out;
  out.schema = schema;
  out.samples.reserve(rows.size());
  for (const std::size_t r : rows) out.samples.push_back(samples[r]);
  return out;
}

FeatureTable FeatureTable::select_features(const std::vector<std::string>& keep) const {
  std::vector<std::size_t> idx;
  idx.reserve(keep.size());
  for (const auto& name : keep) {
    const auto i = schema.index_of(name);
    if (!i) throw DataError("select_features: unknown feature '" + name + "'");
    idx.push_back(*i);
  }
  FeatureTable out;
  out.schema.names = keep;
  for (const auto& name : keep)
    if (schema.is_normalized(name)) out.schema.normalized_subset.push_back(name);
  out.samples.reserve(samples.size());
  for (const auto& s : samples) {
    Sample ns = s;
    ns.features.clear();
    ns.features.reserve(idx.size());
    for (const std::size_t i : idx) ns.features.push_back(s.features[i]);
    out.samples.push_back(std::move(ns));
  }
  return out;
}

void LabelRule::validate() const {
  if (kind == Kind::threshold) {
    if (rating_cutoff < 0 || rating_cutoff > 4)
      throw ConfigError("label_rule: rating_cutoff must be in [0,4]");
  } else {
    for (const auto& [cat, v] : category_map)
      if (v != 0 && v != 1)
        throw ConfigError("label_rule: category '" + cat + "' maps to " +
                          std::to_string(v) + ", expected 0 or 1");
  }
}

namespace {

// Minimal RFC-4180 style CSV: quoted fields may contain commas, quotes are
// doubled. One record per line (no embedded newlines).
std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted)
    throw DataError("csv line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(cur);
  return fields;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += "\"\"";
    out += c;
  }
  out += '"';
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  double value = 0;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

std::optional<long> parse_int(const std::string& s) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  long value = 0;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

std::size_t round_half_up(double x) {
  return static_cast<std::size_t>(std::floor(x + 0.5));
}

}  // namespace

FeatureTable load_csv(const std::string& path, const std::optional<FeatureSchema>& schema,
                      const std::optional<LabelRule>& label_rule,
                      const LoadOptions& options, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "': empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line, 1);

  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (col.count(header[i]))
      throw DataError("'" + path + "': duplicate column '" + header[i] + "'");
    col[header[i]] = i;
  }
  const auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = col.find(name);
    if (it == col.end()) return std::nullopt;
    return it->second;
  };
  for (const char* required : {"id", "site", "study"})
    if (!find_col(required))
      throw DataError("'" + path + "': missing required column '" + required + "'");

  FeatureTable table;
  if (schema) {
    table.schema = *schema;
    table.schema.validate();
    for (const auto& name : table.schema.names)
      if (!find_col(name)) throw DataError("'" + path + "': missing column '" + name + "'");
  } else {
    static const std::set<std::string> reserved = {"id", "site", "study", "rating", "label"};
    for (const auto& name : header)
      if (!reserved.count(name)) table.schema.names.push_back(name);
    table.schema.normalized_subset = table.schema.names;
    table.schema.validate();
  }

  const auto rating_col = find_col("rating");
  const auto label_col = find_col("label");
  if (options.require_labels && !rating_col && !label_col)
    throw DataError("'" + path + "': missing column 'rating' or 'label'");
  if (rating_col && label_rule) label_rule->validate();
  if (rating_col && !label_col && !label_rule && options.require_labels)
    throw ConfigError("'" + path + "': rating column present but no label rule given");

  std::vector<std::size_t> feature_cols;
  feature_cols.reserve(table.schema.names.size());
  for (const auto& name : table.schema.names) feature_cols.push_back(*find_col(name));

  LoadReport local;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++local.rows_read;
    const std::vector<std::string> fields = split_csv_line(line, line_no);
    const auto fail = [&](const std::string& why) {
      const std::string id =
          fields.size() > *find_col("id") ? fields[*find_col("id")] : ("line " + std::to_string(line_no));
      const std::string msg = id + ": " + why;
      if (!options.drop_invalid) throw DataError("'" + path + "': " + msg);
      ++local.rows_rejected;
      local.reject_reasons.push_back(msg);
    };

    if (fields.size() != header.size()) {
      fail("expected " + std::to_string(header.size()) + " fields, got " +
           std::to_string(fields.size()));
      continue;
    }

    Sample s;
    s.id = fields[*find_col("id")];
    s.site = fields[*find_col("site")];
    s.study = fields[*find_col("study")];

    bool bad = false;
    if (rating_col && !fields[*rating_col].empty()) {
      const std::string& raw = fields[*rating_col];
      if (label_rule && label_rule->kind == LabelRule::Kind::categorical) {
        const auto it = label_rule->category_map.find(raw);
        if (it == label_rule->category_map.end()) {
          fail("unmapped rating category '" + raw + "'");
          bad = true;
        } else {
          s.label = it->second;
        }
      } else {
        const auto r = parse_int(raw);
        if (!r || *r < 0 || *r > 4) {
          fail("rating '" + raw + "' is not an integer in [0,4]");
          bad = true;
        } else {
          s.raw_rating = static_cast<int>(*r);
          if (label_rule)
            s.label = (*r > label_rule->rating_cutoff) ? 0 : 1;  // good iff rating > cutoff
        }
      }
    }
    if (bad) continue;
    if (label_col && !fields[*label_col].empty()) {
      const auto l = parse_int(fields[*label_col]);
      if (!l || (*l != 0 && *l != 1)) {
        fail("label '" + fields[*label_col] + "' is not 0/1");
        continue;
      }
      s.label = static_cast<int>(*l);
    }
    if (options.require_labels && !s.label) {
      fail("no label (empty rating/label cell)");
      continue;
    }

    s.features.reserve(feature_cols.size());
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      const std::string& cell = fields[feature_cols[j]];
      const auto v = parse_double(cell);
      if (!v || !std::isfinite(*v)) {
        fail("feature '" + table.schema.names[j] + "' value '" + cell +
             "' is not a finite number");
        bad = true;
        break;
      }
      s.features.push_back(*v);
    }
    if (bad) continue;
    table.samples.push_back(std::move(s));
  }

  table.validate();
  if (report) *report = local;
  return table;
}

void save_csv(const FeatureTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  const bool any_rating = std::any_of(table.samples.begin(), table.samples.end(),
                                      [](const Sample& s) { return s.raw_rating.has_value(); });
  const bool any_label = std::any_of(table.samples.begin(), table.samples.end(),
                                     [](const Sample& s) { return s.label.has_value(); });
  out << "id,site,study";
  if (any_rating) out << ",rating";
  if (any_label) out << ",label";
  for (const auto& name : table.schema.names) out << ',' << csv_escape(name);
  out << '\n';
  for (const auto& s : table.samples) {
    out << csv_escape(s.id) << ',' << csv_escape(s.site) << ',' << csv_escape(s.study);
    if (any_rating) {
      out << ',';
      if (s.raw_rating) out << *s.raw_rating;
    }
    if (any_label) {
      out << ',';
      if (s.label) out << *s.label;
    }
    for (const double v : s.features) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

std::pair<FeatureTable, FeatureTable> split_per_study(const FeatureTable& table,
                                                      const SplitSpec& spec) {
  if (spec.kind != SplitSpec::Kind::per_study_fraction)
    throw ConfigError("split_per_study: wrong spec kind");
  if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0)
    throw ConfigError("split_per_study: train_fraction must be in (0,1)");
  if (table.samples.empty()) throw DataError("split_per_study: empty table");

  std::vector<bool> in_train(table.size(), false);
  for (const auto& [study, rows] : table.rows_by_study()) {
    const std::size_t n_train = round_half_up(spec.train_fraction * static_cast<double>(rows.size()));
    Rng rng(mix(spec.seed, hash_str(study)));
    const auto chosen = sample_without_replacement(rows.size(), n_train, rng);
    for (const std::size_t c : chosen) in_train[rows[c]] = true;
  }
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t i = 0; i < table.size(); ++i)
    (in_train[i] ? train_rows : test_rows).push_back(i);
  return {table.select_rows(train_rows), table.select_rows(test_rows)};
}

FeatureTable subsample_site_preserving(const FeatureTable& table, const SplitSpec& spec) {
  if (spec.kind != SplitSpec::Kind::site_preserving_subsample)
    throw ConfigError("subsample_site_preserving: wrong spec kind");
  if (spec.target_size > table.size())
    throw DataError("subsample_site_preserving: target_size " +
                    std::to_string(spec.target_size) + " > table size " +
                    std::to_string(table.size()));

  const auto by_site = table.rows_by_site();
  struct SiteQuota {
    std::string site;
    std::size_t size;
    std::size_t quota;
    double remainder;
  };
  std::vector<SiteQuota> quotas;
  const double total = static_cast<double>(table.size());
  std::size_t assigned = 0;
  for (const auto& [site, rows] : by_site) {
    const double exact =
        static_cast<double>(spec.target_size) * static_cast<double>(rows.size()) / total;
    const std::size_t floor_q = static_cast<std::size_t>(std::floor(exact));
    quotas.push_back({site, rows.size(), floor_q, exact - static_cast<double>(floor_q)});
    assigned += floor_q;
  }
  // Largest remainder; ties to the larger site, then lexicographic site id.
  std::vector<std::size_t> order(quotas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (quotas[a].remainder != quotas[b].remainder)
      return quotas[a].remainder > quotas[b].remainder;
    if (quotas[a].size != quotas[b].size) return quotas[a].size > quotas[b].size;
    return quotas[a].site < quotas[b].site;
  });
  std::size_t remaining = spec.target_size - assigned;
  for (std::size_t k = 0; remaining > 0; k = (k + 1) % order.size()) {
    SiteQuota& q = quotas[order[k]];
    if (q.quota < q.size) {
      ++q.quota;
      --remaining;
    }
  }

  std::vector<std::size_t> keep;
  keep.reserve(spec.target_size);
  for (const auto& q : quotas) {
    const auto& rows = by_site.at(q.site);
    Rng rng(mix(spec.seed, hash_str(q.site)));
    for (const std::size_t c : sample_without_replacement(rows.size(), q.quota, rng))
      keep.push_back(rows[c]);
  }
  std::sort(keep.begin(), keep.end());
  return table.select_rows(keep);
}

}  // namespace batchqc
