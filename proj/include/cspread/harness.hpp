// Walk-forward engine: rolling and recursive windows, validation-RMSE grid
// search, winner refit, benchmark regression and optional SHAP collection.
#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cspread/explain.hpp"
#include "cspread/learners.hpp"
#include "cspread/panel.hpp"
#include "cspread/prediction.hpp"

namespace cspread {

// ---------------------------------------------------------------------------
// Hyperparameter grids
// ---------------------------------------------------------------------------

inline std::vector<LearnerSpec> default_grid(LearnerKind kind) {
  std::vector<LearnerSpec> g;
  LearnerSpec s;
  s.kind = kind;
  switch (kind) {
    case LearnerKind::RF:
      for (int depth : {8, -1})
        for (int b : {100, 300}) {
          s.n_trees = b;
          s.max_depth = depth;
          g.push_back(s);
        }
      break;
    case LearnerKind::GBDT:
    case LearnerKind::XGB:
      s.lambda = kind == LearnerKind::XGB ? 1.0 : 0.0;
      s.alpha = 0.0;
      for (double lr : {0.05, 0.1})
        for (int depth : {3, 6})
          for (int n : {100, 300}) {
            s.n_trees = n;
            s.learning_rate = lr;
            s.max_depth = depth;
            g.push_back(s);
          }
      break;
    case LearnerKind::AdaBoost:
      s.max_depth = 4;
      for (int n : {50, 100}) {
        s.n_trees = n;
        g.push_back(s);
      }
      break;
    case LearnerKind::Lasso:
    case LearnerKind::Ridge:
      for (double lam : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
        s.lambda = lam;
        g.push_back(s);
      }
      break;
    case LearnerKind::ENet:
      for (double a : {0.25, 0.5, 0.75})
        for (double lam : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
          s.lambda = lam;
          s.alpha = a;
          g.push_back(s);
        }
      break;
    case LearnerKind::OLS:
      s.lambda = 0.0;
      g.push_back(s);
      break;
  }
  return g;
}

// First k stages of an ensemble; equals a fresh fit with count k.
inline EnsembleModel truncate(const EnsembleModel& m, std::size_t k) {
  EnsembleModel out = m;
  const std::size_t per_stage = m.softmax ? static_cast<std::size_t>(m.n_classes) : 1;
  const std::size_t n = std::min(m.trees.size(), k * per_stage);
  out.trees.resize(n);
  out.weights.resize(n);
  if (m.kind == LearnerKind::RF || m.kind == LearnerKind::AdaBoost) {
    double s = 0.0;
    for (double w : out.weights) s += w;
    for (auto& w : out.weights) w /= s;
  }
  out.spec.n_trees = static_cast<int>(k);
  return out;
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

struct MonthWindow {
  Month target;
  MonthRange train, val;
};

inline std::vector<MonthWindow> plan_windows(const WindowPlan& plan, Month panel_first, Month panel_last) {
  plan.validate();
  const Month start = plan.start.value_or(panel_first);
  const Month end = plan.end.value_or(panel_last);
  const int v = plan.resolved_val_len();
  std::vector<MonthWindow> out;
  for (Month t = start + plan.M; t <= end; t = t + 1) {
    MonthWindow w;
    w.target = t;
    w.val = {t - v, t - 1};
    w.train = {plan.mode == WindowMode::Rolling ? t - plan.M : start, t - v - 1};
    out.push_back(w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark: per-window univariate OLS of spread on a single predictor.
// ---------------------------------------------------------------------------

struct BenchmarkFit {
  double intercept = 0.0, slope = 0.0, window_mean = 0.0;
  bool fallback = false;
  std::string note;

  double predict(double x) const { return fallback || is_missing(x) ? window_mean : intercept + slope * x; }
};

inline BenchmarkFit fit_benchmark(std::span<const double> predictor, std::span<const double> y) {
  BenchmarkFit b;
  if (y.empty()) throw EmptySliceError("benchmark: empty window");
  b.window_mean = mean(y);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (!is_missing(predictor[i])) {
      xs.push_back(predictor[i]);
      ys.push_back(y[i]);
    }
  if (xs.size() < 2) {
    b.fallback = true;
    b.note = "predictor missing in window; window-mean fallback";
    return b;
  }
  const double mx = mean(xs), my = mean(ys);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (!(sxx > 1e-12 * std::max(1.0, mx * mx) * static_cast<double>(xs.size()))) {
    b.fallback = true;
    b.note = "zero-variance predictor in window; window-mean fallback";
    return b;
  }
  b.slope = sxy / sxx;
  b.intercept = my - b.slope * mx;
  return b;
}

// ---------------------------------------------------------------------------
// Walk-forward
// ---------------------------------------------------------------------------

struct HarnessOptions {
  int threads = 1;
  std::uint64_t seed = 0;
  std::string benchmark_column = "rating_code";
  bool collect_shap = false;
  std::size_t shap_max_rows = 0;  // per month; 0 keeps every validation row
};

struct WalkForwardResult {
  PredictionSet predictions;
  std::vector<MonthShap> shap;  // one per predicted month when collected
};

namespace detail {

struct GridOutcome {
  std::size_t best = 0;
  double best_rmse = std::numeric_limits<double>::infinity();
  std::optional<Model> best_model;  // fitted on training only, truncated to the winner
};

inline double rmse(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

inline bool same_except_count(const LearnerSpec& a, const LearnerSpec& b) {
  LearnerSpec x = a, y = b;
  x.n_trees = y.n_trees = 0;
  return to_json(x) == to_json(y);
}

inline Model fit_quiet(const LearnerSpec& s, const Matrix& X, std::span<const double> y) {
  try {
    return fit(s, X, y);
  } catch (const ConvergenceError& e) {
    return e.last_iterate;
  }
}

// Validation RMSE for every grid point. Tree grid points differing only in
// their count share one fit whose staged predictions are scored.
inline GridOutcome search_grid(const std::vector<LearnerSpec>& grid, const SupervisedSlice& train,
                               const SupervisedSlice& val, bool keep_model) {
  std::vector<double> scores(grid.size(), std::numeric_limits<double>::infinity());
  std::vector<char> done(grid.size(), 0);
  std::vector<std::optional<Model>> models(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (done[i]) continue;
    if (is_tree_kind(grid[i].kind)) {
      std::vector<std::size_t> members;
      int max_count = 0;
      for (std::size_t j = i; j < grid.size(); ++j)
        if (!done[j] && same_except_count(grid[i], grid[j])) {
          members.push_back(j);
          max_count = std::max(max_count, grid[j].n_trees);
        }
      LearnerSpec s = grid[i];
      s.n_trees = max_count;
      auto m = std::get<EnsembleModel>(fit(s, train.X, train.y));
      std::vector<std::size_t> counts;
      for (auto j : members) counts.push_back(static_cast<std::size_t>(grid[j].n_trees));
      const auto staged = staged_predict(m, val.X, counts);
      for (std::size_t k = 0; k < members.size(); ++k) {
        scores[members[k]] = rmse(staged[k], val.y);
        done[members[k]] = 1;
        if (keep_model) models[members[k]] = truncate(m, counts[k]);
      }
    } else {
      Model m = fit_quiet(grid[i], train.X, train.y);
      scores[i] = rmse(predict(m, val.X), val.y);
      done[i] = 1;
      if (keep_model) models[i] = std::move(m);
    }
  }
  GridOutcome out;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (scores[i] < out.best_rmse) {
      out.best_rmse = scores[i];
      out.best = i;
    }
  if (keep_model) out.best_model = std::move(models[out.best]);
  return out;
}

struct MonthResult {
  std::vector<PredictionEntry> entries;
  std::optional<MonthChoice> choice;
  std::optional<Gap> gap;
  std::optional<MonthShap> shap;
};

inline std::vector<ShapVector> shap_rows(const Model& m, const Matrix& X, const Matrix& background_X,
                                         const std::vector<std::size_t>& rows) {
  const auto bg = background_means(background_X);
  std::vector<ShapVector> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(shap(m, X.row(r), bg));
  return out;
}

}  // namespace detail

inline WalkForwardResult run_walk_forward(const Panel& panel, const WindowPlan& plan, LearnerKind kind,
                                          std::vector<LearnerSpec> grid, FeatureSet set,
                                          const HarnessOptions& opt = {}) {
  if (grid.empty()) grid = default_grid(kind);
  for (const auto& g : grid) {
    if (g.kind != kind) throw InvalidArgument("grid point of kind " + to_string(g.kind) + " in a " + to_string(kind) + " run");
    validate(g);
  }
  const auto months = panel.months();
  if (months.empty()) throw InvalidArgument("run_walk_forward: empty panel");
  const auto windows = plan_windows(plan, months.front(), months.back());

  std::vector<detail::MonthResult> results(windows.size());
  parallel_for(windows.size(), opt.threads, [&](std::size_t wi) {
    const auto& w = windows[wi];
    auto& res = results[wi];
    const std::uint64_t month_seed = derive_seed(opt.seed, static_cast<std::uint64_t>(w.target.value));
    auto train = build_supervised(panel, set, w.train, opt.benchmark_column);
    auto val = build_supervised(panel, set, w.val, opt.benchmark_column);
    auto target = build_supervised(panel, set, {w.target, w.target}, opt.benchmark_column);
    if (train.y.empty() || val.y.empty()) {
      res.gap = Gap{w.target, train.y.empty() ? "empty training slice " + w.train.from.str() + ".." + w.train.to.str()
                                              : "empty validation slice " + w.val.from.str() + ".." + w.val.to.str()};
      return;
    }
    if (target.y.empty()) {
      res.gap = Gap{w.target, "no rows with a t-1 feature observation"};
      return;
    }
    auto g = grid;
    for (auto& s : g) s.seed = month_seed;
    auto outcome = detail::search_grid(g, train, val, opt.collect_shap);

    const auto window = build_supervised(panel, set, {w.train.from, w.val.to}, opt.benchmark_column);
    const Model winner = detail::fit_quiet(g[outcome.best], window.X, window.y);
    const auto pred = predict(winner, target.X);
    const auto bench = fit_benchmark(window.bench, window.y);

    for (std::size_t i = 0; i < target.y.size(); ++i)
      res.entries.push_back({target.keys[i].bond_id, target.keys[i].month, target.y[i], pred[i],
                             bench.predict(target.bench[i])});
    res.choice = MonthChoice{w.target, g[outcome.best], outcome.best_rmse, train.y.size(), val.y.size(),
                             target.y.size(), bench.note};

    if (opt.collect_shap && outcome.best_model) {
      std::vector<std::size_t> rows(val.y.size());
      std::iota(rows.begin(), rows.end(), std::size_t{0});
      if (opt.shap_max_rows > 0 && rows.size() > opt.shap_max_rows) {
        Rng rng = Rng::stream(month_seed, 0x5ea9);
        rows = rng.sample_without_replacement(rows.size(), opt.shap_max_rows);
      }
      res.shap = MonthShap{w.target, detail::shap_rows(*outcome.best_model, val.X, train.X, rows)};
    }
  });

  WalkForwardResult out;
  auto& p = out.predictions;
  p.model = to_string(kind);
  p.feature_set = to_string(set);
  p.benchmark_column = opt.benchmark_column;
  p.plan = plan;
  for (auto& r : results) {
    p.entries.insert(p.entries.end(), r.entries.begin(), r.entries.end());
    if (r.choice) p.choices.push_back(*r.choice);
    if (r.gap) p.gaps.push_back(*r.gap);
    if (r.shap) out.shap.push_back(std::move(*r.shap));
  }
  sort_entries(p.entries);
  return out;
}

// Benchmark-only prediction set: predicted = benchmark.
inline PredictionSet run_benchmark(const Panel& panel, const WindowPlan& plan,
                                   const std::string& predictor_column = "rating_code") {
  const auto months = panel.months();
  if (months.empty()) throw InvalidArgument("run_benchmark: empty panel");
  (void)column_reader(panel, predictor_column);
  PredictionSet p;
  p.model = "benchmark";
  p.feature_set = "none";
  p.benchmark_column = predictor_column;
  p.plan = plan;
  for (const auto& w : plan_windows(plan, months.front(), months.back())) {
    const auto window = build_supervised(panel, FeatureSet::Traditional, {w.train.from, w.val.to}, predictor_column);
    const auto target = build_supervised(panel, FeatureSet::Traditional, {w.target, w.target}, predictor_column);
    if (window.y.empty() || target.y.empty()) {
      p.gaps.push_back({w.target, window.y.empty() ? "empty window" : "no rows with a t-1 feature observation"});
      continue;
    }
    const auto b = fit_benchmark(window.bench, window.y);
    for (std::size_t i = 0; i < target.y.size(); ++i) {
      const double v = b.predict(target.bench[i]);
      p.entries.push_back({target.keys[i].bond_id, w.target, target.y[i], v, v});
    }
    if (!b.note.empty()) p.notes.push_back({w.target, b.note});
  }
  sort_entries(p.entries);
  return p;
}

}  // namespace cspread
