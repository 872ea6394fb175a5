// Model x feature-set out-of-sample summary with Average and Benchmark rows.
#pragma once

#include <array>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "cspread/evalstats.hpp"
#include "cspread/harness.hpp"

namespace cspread {

struct Table2Cell {
  double mae = kMissing, rmse = kMissing, r2 = kMissing, r2_os = kMissing;
  std::size_t n_obs = 0;
};

struct Table2Row {
  std::string model;
  std::array<Table2Cell, 2> cells;  // [traditional, all]
};

struct Table2Options {
  std::vector<LearnerKind> learners = standard_learners();
  std::map<LearnerKind, std::vector<LearnerSpec>> grids;  // absent kind: default grid
  HarnessOptions harness;
  std::function<void(const std::string&)> progress;
};

struct Table2 {
  WindowPlan plan;
  std::vector<Table2Row> rows;  // learners in order, then "Average", then "Benchmark"
  std::map<std::pair<LearnerKind, FeatureSet>, WalkForwardResult> runs;

  const Table2Row& row(const std::string& model) const {
    for (const auto& r : rows)
      if (r.model == model) return r;
    throw InvalidArgument("no row '" + model + "' in the summary");
  }
};

inline std::size_t set_slot(FeatureSet s) { return s == FeatureSet::All ? 1 : 0; }

inline Table2Cell to_cell(const EvalReport& e) { return {e.mae, e.rmse, e.r2, e.r2_os, e.n_obs}; }

inline Table2 report_table2(const Panel& panel, const WindowPlan& plan, const Table2Options& opt = {}) {
  Table2 t;
  t.plan = plan;
  std::array<std::optional<PredictionSet>, 2> bench;
  for (auto kind : opt.learners) {
    Table2Row row{to_string(kind), {}};
    for (auto set : {FeatureSet::Traditional, FeatureSet::All}) {
      if (opt.progress) opt.progress(to_string(plan.mode) + " " + to_string(kind) + " " + to_string(set));
      auto it = opt.grids.find(kind);
      auto res = run_walk_forward(panel, plan, kind, it == opt.grids.end() ? std::vector<LearnerSpec>{} : it->second, set,
                                  opt.harness);
      row.cells[set_slot(set)] = to_cell(eval(res.predictions));
      if (!bench[set_slot(set)]) bench[set_slot(set)] = res.predictions.as_benchmark();
      t.runs.emplace(std::make_pair(kind, set), std::move(res));
    }
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) return t;

  Table2Row avg{"Average", {}};
  for (std::size_t s = 0; s < 2; ++s) {
    auto& c = avg.cells[s];
    c.mae = c.rmse = c.r2 = c.r2_os = 0.0;
    const double n = static_cast<double>(t.rows.size());
    for (const auto& r : t.rows) {
      c.mae += r.cells[s].mae / n;
      c.rmse += r.cells[s].rmse / n;
      c.r2 += r.cells[s].r2 / n;
      c.r2_os += r.cells[s].r2_os / n;
      c.n_obs = std::max(c.n_obs, r.cells[s].n_obs);
    }
  }
  Table2Row b{"Benchmark", {}};
  for (std::size_t s = 0; s < 2; ++s) b.cells[s] = to_cell(eval(*bench[s]));
  t.rows.push_back(std::move(avg));
  t.rows.push_back(std::move(b));
  return t;
}

inline void write_table2_csv(std::ostream& out, const std::vector<Table2>& tables) {
  csv::Record header = {"window", "M", "model"};
  for (const char* set : {"traditional", "all"})
    for (const char* m : {"MAE", "RMSE", "R2", "R2_OS"}) header.push_back(std::string(m) + "_" + set);
  csv::write_record(out, header);
  for (const auto& t : tables)
    for (const auto& r : t.rows) {
      csv::Record rec = {to_string(t.plan.mode), std::to_string(t.plan.M), r.model};
      for (const auto& c : r.cells)
        for (double v : {c.mae, c.rmse, c.r2, c.r2_os}) rec.push_back(format_double(v));
      csv::write_record(out, rec);
    }
}

}  // namespace cspread
