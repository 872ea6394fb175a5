// Bond-month panel: loading, credit-spread construction, preprocessing and
// assembly of lagged supervised datasets.
#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cspread/core.hpp"
#include "cspread/csv.hpp"

namespace cspread {

enum class FeatureGroup { M, F, NF, B };
enum class FeatureSet { Traditional, All };

inline std::string to_string(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::M: return "M";
    case FeatureGroup::F: return "F";
    case FeatureGroup::NF: return "NF";
    case FeatureGroup::B: return "B";
  }
  return "?";
}

inline FeatureGroup parse_group(const std::string& s) {
  if (s == "M") return FeatureGroup::M;
  if (s == "F") return FeatureGroup::F;
  if (s == "NF") return FeatureGroup::NF;
  if (s == "B") return FeatureGroup::B;
  throw InvalidArgument("unknown feature group '" + s + "'");
}

inline std::string to_string(FeatureSet s) { return s == FeatureSet::All ? "all" : "traditional"; }

inline FeatureSet parse_feature_set(const std::string& s) {
  if (s == "all") return FeatureSet::All;
  if (s == "traditional") return FeatureSet::Traditional;
  throw InvalidArgument("unknown feature set '" + s + "' (expected traditional|all)");
}

struct FeatureEntry {
  std::string name;
  FeatureGroup group;
  std::string id;
};

struct FeatureManifest {
  std::vector<FeatureEntry> entries;

  std::size_t size() const { return entries.size(); }

  std::optional<std::size_t> index_of(const std::string& name) const {
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].name == name || entries[i].id == name) return i;
    return std::nullopt;
  }

  // "traditional" = M, F, B; "all" = traditional plus NF. Column order is kept.
  std::vector<std::size_t> columns(FeatureSet set) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (set == FeatureSet::All || entries[i].group != FeatureGroup::NF) out.push_back(i);
    return out;
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& e : entries)
      if (!seen.insert(e.name).second) throw InvalidArgument("duplicate feature name '" + e.name + "'");
  }
};

// Group and id from a column name such as "F18" or "NF3_media_tone".
inline std::optional<std::pair<FeatureGroup, std::string>> infer_group(const std::string& name) {
  std::size_t plen = 0;
  FeatureGroup g{};
  if (name.rfind("NF", 0) == 0) {
    plen = 2;
    g = FeatureGroup::NF;
  } else if (!name.empty() && (name[0] == 'M' || name[0] == 'F' || name[0] == 'B')) {
    plen = 1;
    g = name[0] == 'M' ? FeatureGroup::M : name[0] == 'F' ? FeatureGroup::F : FeatureGroup::B;
  } else {
    return std::nullopt;
  }
  std::size_t end = plen;
  while (end < name.size() && std::isdigit(static_cast<unsigned char>(name[end]))) ++end;
  if (end == plen) return std::nullopt;
  if (end < name.size() && name[end] != '_') return std::nullopt;
  return std::make_pair(g, name.substr(0, end));
}

struct MechanismValues {
  double roa = kMissing;
  double leverage = kMissing;
  double stl_ratio = kMissing;
  double kz = kMissing;
};

struct ObservationRow {
  std::string bond_id;
  Month month;
  double spread = kMissing;
  double rating_code = kMissing;
  std::string industry;
  MechanismValues mechanism;
  std::vector<double> features;
  std::vector<double> aux;  // extra named columns (e.g. an Altman-Z score), never transformed
};

struct Panel {
  FeatureManifest manifest;
  std::vector<std::string> aux_names;
  std::vector<ObservationRow> rows;  // sorted by (bond_id, month)
  std::vector<std::string> warnings;
  bool preprocessed = false;

  // Contiguous month axis from the first to the last observed month.
  std::vector<Month> months() const {
    std::vector<Month> out;
    if (rows.empty()) return out;
    Month lo = rows.front().month, hi = rows.front().month;
    for (const auto& r : rows) {
      lo = std::min(lo, r.month);
      hi = std::max(hi, r.month);
    }
    for (Month m = lo; m <= hi; m = m + 1) out.push_back(m);
    return out;
  }

  const ObservationRow* find(const std::string& bond, Month month) const {
    auto it = std::lower_bound(rows.begin(), rows.end(), std::pair<const std::string&, Month>(bond, month),
                               [](const ObservationRow& r, const auto& key) {
                                 int c = r.bond_id.compare(key.first);
                                 return c < 0 || (c == 0 && r.month < key.second);
                               });
    if (it == rows.end() || it->bond_id != bond || it->month != month) return nullptr;
    return &*it;
  }

  ObservationRow* find(const std::string& bond, Month month) {
    return const_cast<ObservationRow*>(std::as_const(*this).find(bond, month));
  }

  std::optional<std::size_t> aux_index(const std::string& name) const {
    for (std::size_t i = 0; i < aux_names.size(); ++i)
      if (aux_names[i] == name) return i;
    return std::nullopt;
  }

  // Sorts rows by (bond_id, month) and enforces key uniqueness and row width.
  void normalize() {
    manifest.validate();
    std::stable_sort(rows.begin(), rows.end(), [](const ObservationRow& a, const ObservationRow& b) {
      int c = a.bond_id.compare(b.bond_id);
      return c < 0 || (c == 0 && a.month < b.month);
    });
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].features.size() != manifest.size())
        throw InvalidArgument("row " + rows[i].bond_id + "/" + rows[i].month.str() + " has wrong feature count");
      if (rows[i].aux.size() != aux_names.size()) rows[i].aux.resize(aux_names.size(), kMissing);
      if (i > 0 && rows[i].bond_id == rows[i - 1].bond_id && rows[i].month == rows[i - 1].month)
        throw DuplicateKeyError("duplicate (bond, month) key: (" + rows[i].bond_id + ", " + rows[i].month.str() + ")");
      if (!is_missing(rows[i].spread) && !std::isfinite(rows[i].spread))
        throw InvalidArgument("non-finite spread at " + rows[i].bond_id + "/" + rows[i].month.str());
    }
  }
};

// ---------------------------------------------------------------------------
// Loading and writing
// ---------------------------------------------------------------------------

struct PanelSchema {
  std::string bond_id = "bond_id";
  std::string month = "month";
  std::string spread = "spread";
  std::string rating = "rating_code";
  std::string industry = "industry";
  std::string roa = "roa";
  std::string leverage = "leverage";
  std::string stl_ratio = "stl_ratio";
  std::string kz = "kz";
  std::map<std::string, FeatureGroup> group_overrides;
  std::vector<std::string> aux_columns;  // numeric columns kept aside from the feature matrix
};

inline Panel load_panel(const csv::Table& table, const PanelSchema& schema = {}) {
  const auto col = [&](const std::string& name) { return table.column(name); };
  const auto id_c = col(schema.bond_id), month_c = col(schema.month), spread_c = col(schema.spread);
  if (id_c < 0 || month_c < 0 || spread_c < 0)
    throw InvalidArgument("panel CSV must have columns '" + schema.bond_id + "', '" + schema.month + "', '" +
                          schema.spread + "'");
  const auto rating_c = col(schema.rating), industry_c = col(schema.industry);
  const std::ptrdiff_t mech_c[4] = {col(schema.roa), col(schema.leverage), col(schema.stl_ratio), col(schema.kz)};

  std::set<std::string> reserved = {schema.bond_id, schema.month,    schema.spread,    schema.rating,
                                    schema.industry, schema.roa,     schema.leverage, schema.stl_ratio,
                                    schema.kz};
  Panel panel;
  std::vector<std::size_t> feature_cols, aux_cols;
  for (const auto& a : schema.aux_columns) {
    auto c = col(a);
    if (c < 0) throw InvalidArgument("aux column '" + a + "' not in CSV");
    panel.aux_names.push_back(a);
    aux_cols.push_back(static_cast<std::size_t>(c));
    reserved.insert(a);
  }
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& name = table.header[c];
    if (reserved.count(name)) continue;
    FeatureEntry entry{name, FeatureGroup::M, name};
    if (auto ov = schema.group_overrides.find(name); ov != schema.group_overrides.end()) {
      entry.group = ov->second;
      if (auto inferred = infer_group(name)) entry.id = inferred->second;
    } else if (auto inferred = infer_group(name)) {
      entry.group = inferred->first;
      entry.id = inferred->second;
    } else {
      throw InvalidArgument("feature column '" + name + "' has no recognizable group prefix (M|F|NF|B)");
    }
    panel.manifest.entries.push_back(entry);
    feature_cols.push_back(c);
  }

  panel.rows.reserve(table.rows.size());
  for (const auto& rec : table.rows) {
    ObservationRow row;
    row.bond_id = rec[id_c];
    row.month = Month::parse(rec[month_c]);
    row.spread = parse_double_or_missing(rec[spread_c]);
    if (rating_c >= 0) row.rating_code = parse_double_or_missing(rec[rating_c]);
    if (industry_c >= 0) row.industry = rec[industry_c];
    double* mech[4] = {&row.mechanism.roa, &row.mechanism.leverage, &row.mechanism.stl_ratio, &row.mechanism.kz};
    for (int k = 0; k < 4; ++k)
      if (mech_c[k] >= 0) *mech[k] = parse_double_or_missing(rec[mech_c[k]]);
    row.features.reserve(feature_cols.size());
    for (auto c : feature_cols) row.features.push_back(parse_double_or_missing(rec[c]));
    for (auto c : aux_cols) row.aux.push_back(parse_double_or_missing(rec[c]));
    panel.rows.push_back(std::move(row));
  }
  panel.normalize();
  return panel;
}

inline Panel load_panel(const std::string& path, const PanelSchema& schema = {}) {
  return load_panel(csv::read_file(path), schema);
}

inline void write_panel_csv(const Panel& panel, std::ostream& out) {
  csv::Record header = {"bond_id", "month", "spread", "rating_code", "industry", "roa", "leverage", "stl_ratio", "kz"};
  for (const auto& a : panel.aux_names) header.push_back(a);
  for (const auto& e : panel.manifest.entries) header.push_back(e.name);
  csv::write_record(out, header);
  for (const auto& r : panel.rows) {
    csv::Record rec = {r.bond_id,
                       r.month.str(),
                       format_double(r.spread),
                       format_double(r.rating_code),
                       r.industry,
                       format_double(r.mechanism.roa),
                       format_double(r.mechanism.leverage),
                       format_double(r.mechanism.stl_ratio),
                       format_double(r.mechanism.kz)};
    for (double v : r.aux) rec.push_back(format_double(v));
    for (double v : r.features) rec.push_back(format_double(v));
    csv::write_record(out, rec);
  }
}

// ---------------------------------------------------------------------------
// Credit spreads: bond YTM minus the treasury YTM linearly interpolated at the
// bond's remaining maturity (flat beyond the curve's end points).
// ---------------------------------------------------------------------------

struct BondYield {
  std::string bond_id;
  Month month;
  double ytm = 0.0;
  double remaining_maturity = 0.0;  // months
};

struct CurvePoint {
  Month month;
  double maturity = 0.0;  // months
  double ytm = 0.0;
};

struct SpreadRecord {
  std::string bond_id;
  Month month;
  double spread = 0.0;
};

inline double interpolate_curve(std::span<const CurvePoint> sorted_by_maturity, double maturity) {
  const auto& c = sorted_by_maturity;
  if (maturity <= c.front().maturity) return c.front().ytm;
  if (maturity >= c.back().maturity) return c.back().ytm;
  auto hi = std::upper_bound(c.begin(), c.end(), maturity,
                             [](double m, const CurvePoint& p) { return m < p.maturity; });
  auto lo = hi - 1;
  if (hi->maturity == lo->maturity) return lo->ytm;
  const double w = (maturity - lo->maturity) / (hi->maturity - lo->maturity);
  return lo->ytm + w * (hi->ytm - lo->ytm);
}

inline std::vector<SpreadRecord> compute_spreads(std::span<const BondYield> yields, std::span<const CurvePoint> curve) {
  std::map<Month, std::vector<CurvePoint>> by_month;
  for (const auto& p : curve) by_month[p.month].push_back(p);
  for (auto& [m, pts] : by_month) {
    std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.maturity < b.maturity; });
    if (pts.size() < 2) throw InvalidArgument("treasury curve for " + m.str() + " has fewer than two maturities");
  }
  std::set<Month> absent;
  for (const auto& y : yields)
    if (!by_month.count(y.month)) absent.insert(y.month);
  if (!absent.empty()) {
    std::string list;
    for (auto m : absent) list += (list.empty() ? "" : ", ") + m.str();
    throw InvalidArgument("treasury curve missing months: " + list);
  }
  std::vector<SpreadRecord> out;
  out.reserve(yields.size());
  for (const auto& y : yields)
    out.push_back({y.bond_id, y.month, y.ytm - interpolate_curve(by_month.at(y.month), y.remaining_maturity)});
  return out;
}

inline std::vector<CurvePoint> read_curve_csv(const std::string& path) {
  auto t = csv::read_file(path);
  auto mc = t.column("month"), tc = t.column("maturity_months"), yc = t.column("ytm");
  if (mc < 0 || tc < 0 || yc < 0) throw InvalidArgument("curve CSV needs month, maturity_months, ytm");
  std::vector<CurvePoint> out;
  for (const auto& r : t.rows) out.push_back({Month::parse(r[mc]), parse_double_or_missing(r[tc]), parse_double_or_missing(r[yc])});
  return out;
}

inline std::vector<BondYield> read_yields_csv(const std::string& path) {
  auto t = csv::read_file(path);
  auto bc = t.column("bond_id"), mc = t.column("month"), yc = t.column("ytm"), rc = t.column("remaining_maturity_months");
  if (bc < 0 || mc < 0 || yc < 0 || rc < 0)
    throw InvalidArgument("yields CSV needs bond_id, month, ytm, remaining_maturity_months");
  std::vector<BondYield> out;
  for (const auto& r : t.rows)
    out.push_back({r[bc], Month::parse(r[mc]), parse_double_or_missing(r[yc]), parse_double_or_missing(r[rc])});
  return out;
}

// Overwrites panel spreads with the computed ones; rows with no yield record keep a missing spread.
inline void assign_spreads(Panel& panel, std::span<const SpreadRecord> spreads) {
  for (auto& r : panel.rows) r.spread = kMissing;
  for (const auto& s : spreads) {
    auto* row = panel.find(s.bond_id, s.month);
    if (row) row->spread = s.spread;
  }
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

struct PreprocessConfig {
  double winsor_p = 0.01;
  bool standardize = true;
};

namespace detail {

inline bool is_dummy_column(const Panel& p, std::size_t j) {
  double first = kMissing, second = kMissing;
  for (const auto& r : p.rows) {
    double v = r.features[j];
    if (is_missing(v)) continue;
    if (is_missing(first) || v == first) {
      first = v;
    } else if (is_missing(second) || v == second) {
      second = v;
    } else {
      return false;
    }
  }
  return !is_missing(second);
}

}  // namespace detail

// Per feature column: (a) same-month median fill, (b) full-sample type-7
// winsorization at [p, 1-p], (c) z-score with the n-1 standard deviation.
// Columns with exactly two distinct values only get step (a); constant
// columns are centered with a warning.
inline Panel preprocess(Panel panel, const PreprocessConfig& cfg = {}) {
  if (!(cfg.winsor_p >= 0.0 && cfg.winsor_p < 0.25))
    throw InvalidArgument("winsor_p must lie in [0, 0.25), got " + format_double(cfg.winsor_p));

  std::map<Month, std::vector<std::size_t>> by_month;
  for (std::size_t i = 0; i < panel.rows.size(); ++i) by_month[panel.rows[i].month].push_back(i);

  for (std::size_t j = 0; j < panel.manifest.size(); ++j) {
    const bool dummy = detail::is_dummy_column(panel, j);

    for (const auto& [m, idx] : by_month) {
      std::vector<double> present;
      bool any_missing = false;
      for (auto i : idx) {
        double v = panel.rows[i].features[j];
        if (is_missing(v)) any_missing = true;
        else present.push_back(v);
      }
      if (!any_missing || present.empty()) continue;
      const double med = median(std::move(present));
      for (auto i : idx)
        if (is_missing(panel.rows[i].features[j])) panel.rows[i].features[j] = med;
    }
    if (dummy) continue;

    std::vector<double> values;
    values.reserve(panel.rows.size());
    for (const auto& r : panel.rows)
      if (!is_missing(r.features[j])) values.push_back(r.features[j]);
    if (values.empty()) continue;

    if (cfg.winsor_p > 0.0) {
      std::vector<double> sorted = values;
      std::sort(sorted.begin(), sorted.end());
      const double lo = quantile_sorted(sorted, cfg.winsor_p);
      const double hi = quantile_sorted(sorted, 1.0 - cfg.winsor_p);
      for (auto& r : panel.rows)
        if (!is_missing(r.features[j])) r.features[j] = std::clamp(r.features[j], lo, hi);
      for (auto& v : values) v = std::clamp(v, lo, hi);
    }

    if (!cfg.standardize) continue;
    const double mu = mean(values);
    const double sd = sample_sd(values);
    const bool degenerate = !(sd > 1e-12 * std::max(1.0, std::abs(mu)));
    if (degenerate)
      panel.warnings.push_back("zero-variance column '" + panel.manifest.entries[j].name + "': centered, scale 1");
    for (auto& r : panel.rows) {
      if (is_missing(r.features[j])) continue;
      r.features[j] = degenerate ? r.features[j] - mu : (r.features[j] - mu) / sd;
    }
  }
  panel.preprocessed = true;
  return panel;
}

// ---------------------------------------------------------------------------
// Supervised slices: features at t-1 paired with the spread at t.
// ---------------------------------------------------------------------------

struct RowKey {
  std::string bond_id;
  Month month;
  auto operator<=>(const RowKey&) const = default;
};

struct SupervisedSlice {
  Matrix X;
  std::vector<double> y;
  std::vector<RowKey> keys;
  std::vector<double> bench;                 // benchmark predictor at t-1
  std::vector<std::size_t> feature_columns;  // manifest indices of X's columns
};

// Accessor for the benchmark predictor column: "rating_code", an aux column or a feature.
inline std::function<double(const ObservationRow&)> column_reader(const Panel& panel, const std::string& name) {
  if (name == "rating_code") return [](const ObservationRow& r) { return r.rating_code; };
  if (auto a = panel.aux_index(name)) return [k = *a](const ObservationRow& r) { return r.aux[k]; };
  if (auto f = panel.manifest.index_of(name)) return [k = *f](const ObservationRow& r) { return r.features[k]; };
  throw InvalidArgument("benchmark predictor column '" + name + "' not found in panel");
}

// All lagged rows whose target month lies in `range`; never throws on empty.
inline SupervisedSlice build_supervised(const Panel& panel, FeatureSet set, MonthRange range,
                                        const std::string& bench_column = "rating_code") {
  SupervisedSlice s;
  s.feature_columns = panel.manifest.columns(set);
  s.X = Matrix(0, s.feature_columns.size());
  const auto bench = column_reader(panel, bench_column);
  std::vector<double> buf(s.feature_columns.size());
  for (std::size_t i = 1; i < panel.rows.size(); ++i) {
    const auto& cur = panel.rows[i];
    const auto& prev = panel.rows[i - 1];
    if (!range.contains(cur.month) || is_missing(cur.spread)) continue;
    if (prev.bond_id != cur.bond_id || prev.month != cur.month - 1) continue;
    for (std::size_t k = 0; k < buf.size(); ++k) buf[k] = prev.features[s.feature_columns[k]];
    s.X.append_row(buf);
    s.y.push_back(cur.spread);
    s.keys.push_back({cur.bond_id, cur.month});
    s.bench.push_back(bench(prev));
  }
  return s;
}

inline SupervisedSlice build_slice(const Panel& panel, FeatureSet set, MonthRange range,
                                   const std::string& bench_column = "rating_code") {
  auto s = build_supervised(panel, set, range, bench_column);
  if (s.y.empty())
    throw EmptySliceError("no supervised rows for target months " + range.from.str() + ".." + range.to.str());
  return s;
}

inline Panel filter_dates(const Panel& panel, Month from, Month to) {
  if (to < from) throw InvalidArgument("filter_dates: from " + from.str() + " is after to " + to.str());
  Panel out;
  out.manifest = panel.manifest;
  out.aux_names = panel.aux_names;
  out.warnings = panel.warnings;
  out.preprocessed = panel.preprocessed;
  for (const auto& r : panel.rows)
    if (from <= r.month && r.month <= to) out.rows.push_back(r);
  return out;
}

}  // namespace cspread
