// Quintile portfolios on predicted spreads and H-L tests of the mechanism
// variables measured in the predicted month.
#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cspread/evalstats.hpp"
#include "cspread/panel.hpp"
#include "cspread/prediction.hpp"

namespace cspread {

inline constexpr int kQuintiles = 5;

inline const std::array<std::string, 4>& mechanism_names() {
  static const std::array<std::string, 4> n = {"roa", "leverage", "stl_ratio", "kz"};
  return n;
}

inline double mechanism_value(const MechanismValues& m, std::size_t k) {
  switch (k) {
    case 0: return m.roa;
    case 1: return m.leverage;
    case 2: return m.stl_ratio;
    default: return m.kz;
  }
}

struct Ranked {
  std::string bond_id;
  double predicted = 0.0;
};

// Group index 0..4 per input element: ascending predicted spread, ties by
// bond_id; sizes floor(n/5) with the first n mod 5 groups one larger.
inline std::vector<int> quintile_sort(const std::vector<Ranked>& xs) {
  const std::size_t n = xs.size();
  if (n < static_cast<std::size_t>(kQuintiles))
    throw InvalidArgument("quintile_sort: need >= 5 bonds, have " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    if (xs[a].predicted != xs[b].predicted) return xs[a].predicted < xs[b].predicted;
    return xs[a].bond_id < xs[b].bond_id;
  });
  const std::size_t base = n / kQuintiles, extra = n % kQuintiles;
  std::vector<int> group(n);
  std::size_t pos = 0;
  for (int g = 0; g < kQuintiles; ++g) {
    const std::size_t size = base + (static_cast<std::size_t>(g) < extra ? 1 : 0);
    for (std::size_t k = 0; k < size; ++k) group[order[pos++]] = g;
  }
  return group;
}

struct MechanismRow {
  std::string variable;
  std::array<double, kQuintiles> q{};  // mean of monthly group means
  double high_minus_low = 0.0;         // q[4] - q[0]
  double t_stat = kMissing;
  std::string status = "ok";           // "ok" | "no dispersion"
  std::size_t months = 0;
  std::vector<Month> month_axis;
  std::vector<std::array<double, kQuintiles>> monthly;  // per-month group means
};

struct MechanismTable {
  std::vector<MechanismRow> rows;
  std::vector<Gap> skipped;
  int lag = 0;
};

// lag < 0 selects the automatic lag from the number of usable months.
inline MechanismTable mechanism_table(const PredictionSet& pred, const Panel& panel, int nw_lag = -1) {
  std::map<Month, std::vector<const PredictionEntry*>> by_month;
  for (const auto& e : pred.entries) by_month[e.month].push_back(&e);

  struct Formed {
    Month month;
    std::vector<int> group;
    std::vector<const ObservationRow*> rows;
  };
  std::vector<Formed> formed;
  MechanismTable table;
  for (auto& [month, entries] : by_month) {
    // Canonical order makes group sums independent of input order.
    std::sort(entries.begin(), entries.end(), [](auto* a, auto* b) { return a->bond_id < b->bond_id; });
    if (entries.size() < static_cast<std::size_t>(kQuintiles)) {
      table.skipped.push_back({month, "fewer than 5 bonds (" + std::to_string(entries.size()) + ")"});
      continue;
    }
    std::vector<Ranked> r;
    for (const auto* e : entries) r.push_back({e->bond_id, e->predicted});
    Formed f{month, quintile_sort(r), {}};
    for (const auto* e : entries) f.rows.push_back(panel.find(e->bond_id, month));
    formed.push_back(std::move(f));
  }
  if (formed.size() < 8)
    throw InvalidArgument("mechanism_table: need >= 8 usable months, have " + std::to_string(formed.size()));

  for (std::size_t k = 0; k < mechanism_names().size(); ++k) {
    MechanismRow row;
    row.variable = mechanism_names()[k];
    for (const auto& f : formed) {
      std::array<double, kQuintiles> sum{}, cnt{};
      for (std::size_t i = 0; i < f.rows.size(); ++i) {
        if (!f.rows[i]) continue;
        const double v = mechanism_value(f.rows[i]->mechanism, k);
        if (is_missing(v)) continue;
        sum[f.group[i]] += v;
        cnt[f.group[i]] += 1;
      }
      if (std::any_of(cnt.begin(), cnt.end(), [](double c) { return c == 0; })) continue;
      std::array<double, kQuintiles> m{};
      for (int g = 0; g < kQuintiles; ++g) m[g] = sum[g] / cnt[g];
      row.month_axis.push_back(f.month);
      row.monthly.push_back(m);
    }
    row.months = row.monthly.size();
    if (row.months == 0) {
      row.status = "no data";
      table.rows.push_back(std::move(row));
      continue;
    }
    std::vector<double> hl;
    for (int g = 0; g < kQuintiles; ++g) {
      double s = 0.0;
      for (const auto& m : row.monthly) s += m[g];
      row.q[g] = s / static_cast<double>(row.months);
    }
    for (const auto& m : row.monthly) hl.push_back(m[kQuintiles - 1] - m[0]);
    row.high_minus_low = row.q[kQuintiles - 1] - row.q[0];
    const int lag = nw_lag < 0 ? default_nw_lag(hl.size()) : nw_lag;
    table.lag = lag;
    try {
      if (hl.size() <= static_cast<std::size_t>(lag)) throw DegenerateSeriesError("series shorter than lag");
      row.t_stat = newey_west_t(hl, lag);
    } catch (const DegenerateSeriesError&) {
      row.status = "no dispersion";
      row.t_stat = kMissing;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline void write_mechanism_csv(std::ostream& out, const MechanismTable& t) {
  csv::write_record(out, {"variable", "Q1", "Q2", "Q3", "Q4", "Q5", "H-L", "t", "months", "status"});
  for (const auto& r : t.rows) {
    csv::Record rec{r.variable};
    for (double v : r.q) rec.push_back(format_double(v));
    rec.push_back(format_double(r.high_minus_low));
    rec.push_back(format_double(r.t_stat));
    rec.push_back(std::to_string(r.months));
    rec.push_back(r.status);
    csv::write_record(out, rec);
  }
}

}  // namespace cspread
