#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "metacub/errors.hpp"
#include "metacub/outcome_model.hpp"
#include "metacub/rng.hpp"

namespace metacub {

using GroupId = int;
using IndividualId = int;

enum class OutcomeKind { Continuous, Binary };

struct DatasetSchema {
  std::string id_column = "id";
  std::string group_column = "group";
  std::string outcome_column = "outcome";
  std::string resource_column;               // optional: resource under which the outcome was logged
  std::vector<std::string> feature_columns;
  std::vector<std::string> truth_columns;    // optional: per-resource true expected outcome
  OutcomeKind outcome_kind = OutcomeKind::Continuous;

  void validate() const {
    if (feature_columns.empty()) throw SchemaError("schema needs at least one feature column");
    std::vector<std::string> all{id_column, group_column, outcome_column};
    if (!resource_column.empty()) all.push_back(resource_column);
    all.insert(all.end(), feature_columns.begin(), feature_columns.end());
    all.insert(all.end(), truth_columns.begin(), truth_columns.end());
    auto sorted = all;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw SchemaError("schema columns must be disjoint");
  }
};

/// One row of a tabular dataset after parsing. Group labels are mapped to
/// dense ids in first-appearance order; the label itself is never interpreted.
struct DataRow {
  std::string id;
  GroupId group = 0;
  int logged_resource = 0;
  double outcome = 0.0;
  std::vector<double> features;
  std::vector<double> truth;  // empty when the source carries no ground truth
};

struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<std::string> group_labels;
  int n_resources = 1;
  OutcomeKind outcome_kind = OutcomeKind::Continuous;
  std::vector<DataRow> rows;

  int n_groups() const noexcept { return static_cast<int>(group_labels.size()); }
  bool has_truth() const noexcept { return !rows.empty() && !rows.front().truth.empty(); }
};

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<std::string> degenerate;  // constant columns that got sd = 1

  static Standardizer fit(const std::vector<DataRow>& rows, const std::vector<std::string>& names) {
    if (rows.empty()) throw ParameterError("cannot standardize an empty set");
    const std::size_t m = rows.front().features.size();
    Standardizer s;
    s.mean.assign(m, 0.0);
    s.sd.assign(m, 0.0);
    for (const auto& r : rows)
      for (std::size_t j = 0; j < m; ++j) s.mean[j] += r.features[j];
    for (auto& v : s.mean) v /= static_cast<double>(rows.size());
    for (const auto& r : rows)
      for (std::size_t j = 0; j < m; ++j) s.sd[j] += (r.features[j] - s.mean[j]) * (r.features[j] - s.mean[j]);
    for (std::size_t j = 0; j < m; ++j) {
      s.sd[j] = std::sqrt(s.sd[j] / static_cast<double>(rows.size()));
      if (!(s.sd[j] > 1e-12)) {
        s.sd[j] = 1.0;
        s.degenerate.push_back(j < names.size() ? names[j] : std::to_string(j));
      }
    }
    return s;
  }

  void apply(std::vector<DataRow>& rows) const {
    for (auto& r : rows)
      for (std::size_t j = 0; j < r.features.size(); ++j) r.features[j] = (r.features[j] - mean[j]) / sd[j];
  }
};

// ---------------------------------------------------------------------------
// CSV

namespace csv {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// 9 significant digits; the dataset round-trip contract is defined against this.
inline std::string format_feature(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column: " + name);
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline Table read(std::istream& in) {
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty CSV input");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  t.header = split_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw ParseError("row " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                       " cells, got " + std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return read(in);
}

}  // namespace csv

/// Parses a dataset CSV against a schema. Features are left raw; callers
/// standardize with statistics from their training split. With
/// `known_groups`, ids follow that list and an unseen label is an error.
inline Dataset parse_dataset(const csv::Table& t, const DatasetSchema& schema,
                             const std::vector<std::string>& known_groups = {}) {
  schema.validate();
  Dataset ds;
  ds.feature_names = schema.feature_columns;
  ds.outcome_kind = schema.outcome_kind;
  const auto id_col = t.column(schema.id_column);
  const auto group_col = t.column(schema.group_column);
  const auto out_col = t.column(schema.outcome_column);
  std::optional<std::size_t> res_col;
  if (!schema.resource_column.empty()) res_col = t.column(schema.resource_column);
  std::vector<std::size_t> feat_cols, truth_cols;
  for (const auto& f : schema.feature_columns) feat_cols.push_back(t.column(f));
  for (const auto& f : schema.truth_columns) truth_cols.push_back(t.column(f));

  std::map<std::string, GroupId> group_ids;
  for (const auto& g : known_groups) group_ids.emplace(g, static_cast<GroupId>(group_ids.size()));
  ds.group_labels = known_groups;
  int max_resource = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& cells = t.rows[i];
    const std::string where = "row " + std::to_string(i + 2);
    DataRow r;
    r.id = cells[id_col];
    const auto& g = cells[group_col];
    if (g.empty()) throw ParseError(where + ": missing group");
    if (!known_groups.empty() && !group_ids.count(g)) throw MappingError(where + ": unknown group '" + g + "'");
    auto [it, inserted] = group_ids.emplace(g, static_cast<GroupId>(group_ids.size()));
    if (inserted) ds.group_labels.push_back(g);
    r.group = it->second;
    auto outcome = csv::parse_double(cells[out_col]);
    if (!outcome) throw ParseError(where + ": non-numeric outcome '" + cells[out_col] + "'");
    r.outcome = *outcome;
    if (schema.outcome_kind == OutcomeKind::Binary) r.outcome = r.outcome > 0.5 ? 1.0 : 0.0;
    if (res_col) {
      auto rv = csv::parse_double(cells[*res_col]);
      if (!rv || *rv < 0 || *rv != std::floor(*rv)) throw ParseError(where + ": bad resource id");
      r.logged_resource = static_cast<int>(*rv);
      max_resource = std::max(max_resource, r.logged_resource);
    }
    for (std::size_t j = 0; j < feat_cols.size(); ++j) {
      auto v = csv::parse_double(cells[feat_cols[j]]);
      if (!v)
        throw ParseError(where + ": non-numeric value '" + cells[feat_cols[j]] + "' in column " +
                         schema.feature_columns[j]);
      r.features.push_back(*v);
    }
    for (std::size_t j = 0; j < truth_cols.size(); ++j) {
      auto v = csv::parse_double(cells[truth_cols[j]]);
      if (!v) throw ParseError(where + ": non-numeric truth value in " + schema.truth_columns[j]);
      r.truth.push_back(*v);
    }
    ds.rows.push_back(std::move(r));
  }
  ds.n_resources = truth_cols.empty() ? max_resource + 1 : static_cast<int>(truth_cols.size());
  return ds;
}

inline Dataset load_dataset(const std::string& path, const DatasetSchema& schema,
                            const std::vector<std::string>& known_groups = {}) {
  return parse_dataset(csv::read_file(path), schema, known_groups);
}

/// Load and z-score every row with statistics from the whole file (the
/// standalone loader case; experiments standardize on the train split).
inline std::pair<Dataset, Standardizer> load_csv(const std::string& path, const DatasetSchema& schema) {
  Dataset ds = load_dataset(path, schema);
  Standardizer s = Standardizer::fit(ds.rows, ds.feature_names);
  s.apply(ds.rows);
  return {std::move(ds), std::move(s)};
}

inline DatasetSchema synthetic_schema(const Dataset& ds) {
  DatasetSchema s;
  s.resource_column = "resource";
  s.feature_columns = ds.feature_names;
  for (int r = 0; r < ds.n_resources; ++r) s.truth_columns.push_back("mu_r" + std::to_string(r));
  s.outcome_kind = ds.outcome_kind;
  return s;
}

inline void write_dataset(std::ostream& os, const Dataset& ds) {
  os << "id,group,resource,outcome";
  for (const auto& f : ds.feature_names) os << ',' << f;
  const bool truth = ds.has_truth();
  if (truth)
    for (int r = 0; r < ds.n_resources; ++r) os << ",mu_r" << r;
  os << '\n';
  for (const auto& r : ds.rows) {
    os << r.id << ',' << ds.group_labels[static_cast<std::size_t>(r.group)] << ',' << r.logged_resource << ','
       << csv::format_feature(r.outcome);
    for (double v : r.features) os << ',' << csv::format_feature(v);
    if (truth)
      for (double v : r.truth) os << ',' << csv::format_feature(v);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic population

struct SyntheticSpec {
  int n_individuals = 400;
  int n_groups = 4;
  int n_features = 6;
  int n_resources = 2;
  OutcomeKind outcome_kind = OutcomeKind::Continuous;
  double noise_sd = 0.3;
  double slope_scale = 0.5;        // sd of the shared per-resource slopes
  double group_slope_scale = 0.3;  // sd of per-(group,resource) slope deviations
  double quadratic = 0.25;         // continuous kind: coefficient on (x0^2 - 1)
  // Additive effect per (group, resource), row-major by group. Empty means zeros.
  std::vector<double> effects;
  std::uint64_t seed = 7;

  void validate() const {
    if (n_individuals < 1 || n_groups < 1 || n_features < 1 || n_resources < 1)
      throw ParameterError("synthetic counts must be >= 1");
    if (!(noise_sd >= 0.0)) throw ParameterError("noise_sd must be >= 0");
    if (!effects.empty() && effects.size() != static_cast<std::size_t>(n_groups * n_resources))
      throw ParameterError("effects must have n_groups * n_resources entries");
  }

  double effect(int k, int r) const {
    return effects.empty() ? 0.0 : effects[static_cast<std::size_t>(k * n_resources + r)];
  }
};

/// Features ~ N(0, I); groups balanced; the expected outcome of individual i
/// under resource r is w_{k,r}.x + c_{k,r} (+ a quadratic term) for the
/// continuous kind and sigmoid of the linear part for the binary kind. Each
/// row also logs one uniformly chosen resource with a noisy outcome draw.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "synthetic"));
  Rng wrng = rng.split("weights");
  const int K = spec.n_groups, R = spec.n_resources, M = spec.n_features;

  std::vector<std::vector<double>> shared(static_cast<std::size_t>(R), std::vector<double>(M));
  for (auto& w : shared)
    for (auto& v : w) v = spec.slope_scale * wrng.normal();
  std::vector<std::vector<double>> w(static_cast<std::size_t>(K * R), std::vector<double>(M));
  for (int k = 0; k < K; ++k)
    for (int r = 0; r < R; ++r)
      for (int j = 0; j < M; ++j)
        w[static_cast<std::size_t>(k * R + r)][j] = shared[r][j] + spec.group_slope_scale * wrng.normal();

  Dataset ds;
  ds.n_resources = R;
  ds.outcome_kind = spec.outcome_kind;
  for (int j = 0; j < M; ++j) ds.feature_names.push_back("x" + std::to_string(j));
  for (int k = 0; k < K; ++k) ds.group_labels.push_back("g" + std::to_string(k));

  std::vector<int> groups(static_cast<std::size_t>(spec.n_individuals));
  for (int i = 0; i < spec.n_individuals; ++i) groups[i] = i % K;
  Rng grng = rng.split("groups");
  grng.shuffle(groups.begin(), groups.end());

  Rng xrng = rng.split("features");
  Rng yrng = rng.split("outcomes");
  for (int i = 0; i < spec.n_individuals; ++i) {
    DataRow row;
    row.id = std::to_string(i);
    row.group = groups[i];
    row.features.resize(M);
    for (auto& v : row.features) v = xrng.normal();
    for (int r = 0; r < R; ++r) {
      const auto& wk = w[static_cast<std::size_t>(row.group * R + r)];
      double lin = spec.effect(row.group, r);
      for (int j = 0; j < M; ++j) lin += wk[j] * row.features[j];
      if (spec.outcome_kind == OutcomeKind::Continuous) {
        lin += spec.quadratic * (row.features[0] * row.features[0] - 1.0);
        row.truth.push_back(lin);
      } else {
        row.truth.push_back(sigmoid(lin));
      }
    }
    row.logged_resource = static_cast<int>(yrng.below(static_cast<std::uint64_t>(R)));
    const double mu = row.truth[static_cast<std::size_t>(row.logged_resource)];
    if (spec.outcome_kind == OutcomeKind::Continuous)
      row.outcome = mu + spec.noise_sd * yrng.normal();
    else
      row.outcome = yrng.uniform() < mu ? 1.0 : 0.0;
    ds.rows.push_back(std::move(row));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Split

struct SplitResult {
  std::vector<DataRow> train;
  std::vector<DataRow> eval;
  std::vector<GroupId> singleton_groups;  // groups with one member, kept in train
};

/// Stratified by group: each group contributes round(fraction * n_k) rows to
/// train (at least one, and at most n_k - 1 when n_k >= 2).
inline SplitResult split(const Dataset& ds, double train_fraction, Rng& rng) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ParameterError("train fraction must be in (0,1)");
  SplitResult out;
  std::vector<std::vector<std::size_t>> by_group(static_cast<std::size_t>(ds.n_groups()));
  for (std::size_t i = 0; i < ds.rows.size(); ++i)
    by_group[static_cast<std::size_t>(ds.rows[i].group)].push_back(i);
  std::vector<char> in_train(ds.rows.size(), 0);
  for (std::size_t k = 0; k < by_group.size(); ++k) {
    auto& idx = by_group[k];
    if (idx.empty()) continue;
    if (idx.size() == 1) {
      out.singleton_groups.push_back(static_cast<GroupId>(k));
      in_train[idx[0]] = 1;
      continue;
    }
    rng.shuffle(idx.begin(), idx.end());
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t j = 0; j < n_train; ++j) in_train[idx[j]] = 1;
  }
  for (std::size_t i = 0; i < ds.rows.size(); ++i) (in_train[i] ? out.train : out.eval).push_back(ds.rows[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Context construction

/// Maps an individual's standardized features (plus optional group
/// indicators) and a resource to the model's action context vector:
/// [1, x, e_r, x (x) e_r] when the outcome depends on the resource.
struct ActionFeaturizer {
  int n_features = 0;
  int n_groups = 0;
  int n_resources = 1;
  bool group_indicators = true;
  bool resource_specific = true;

  int context_dim() const noexcept { return n_features + (group_indicators ? n_groups : 0); }

  int dim() const noexcept {
    const int d = context_dim();
    return resource_specific && n_resources > 1 ? 1 + d + n_resources + d * n_resources : 1 + d;
  }

  Eigen::VectorXd context(const std::vector<double>& features, GroupId group) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(context_dim());
    for (int j = 0; j < n_features; ++j) x(j) = features[static_cast<std::size_t>(j)];
    if (group_indicators) x(n_features + group) = 1.0;
    return x;
  }

  Eigen::VectorXd action(const Eigen::VectorXd& x, int resource) const {
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(dim());
    const int d = context_dim();
    phi(0) = 1.0;
    phi.segment(1, d) = x;
    if (resource_specific && n_resources > 1) {
      phi(1 + d + resource) = 1.0;
      phi.segment(1 + d + n_resources + resource * d, d) = x;
    }
    return phi;
  }
};

}  // namespace metacub
