#include <gtest/gtest.h>

#include <cstring>

#include "cspread/evalstats.hpp"
#include "cspread/harness.hpp"
#include "cspread/synth.hpp"
#include "oracles.hpp"

using namespace cspread;

namespace {

const Month kJan2012 = Month::from_ym(2012, 1);

Panel small_panel(int bonds = 25, int months = 14, std::uint64_t seed = 5) {
  synth::SynthSpec s;
  s.seed = seed;
  s.n_bonds = bonds;
  s.n_months = months;
  return preprocess(synth::generate(s).first);
}

std::vector<LearnerSpec> one_point(LearnerKind k) {
  LearnerSpec s;
  s.kind = k;
  s.n_trees = 8;
  s.max_depth = 3;
  s.lambda = 0.01;
  return {s};
}

std::vector<LearnerSpec> tiny_grid(LearnerKind k) {
  std::vector<LearnerSpec> g;
  for (int n : {3, 6})
    for (int d : {2, 3}) {
      LearnerSpec s;
      s.kind = k;
      s.n_trees = n;
      s.max_depth = d;
      s.lambda = k == LearnerKind::XGB ? 1.0 : 0.01;
      g.push_back(s);
    }
  return g;
}

WindowPlan plan(WindowMode mode, int M, int val_len = 0) {
  WindowPlan p;
  p.mode = mode;
  p.M = M;
  p.val_len = val_len;
  return p;
}

}  // namespace

TEST(PlanWindows, RollingJuly2012Example) {
  const auto w = plan_windows(plan(WindowMode::Rolling, 6, 2), kJan2012, Month::from_ym(2012, 12));
  ASSERT_FALSE(w.empty());
  EXPECT_EQ(w[0].target, Month::from_ym(2012, 7));
  EXPECT_EQ(w[0].train.from, Month::from_ym(2012, 1));
  EXPECT_EQ(w[0].train.to, Month::from_ym(2012, 4));
  EXPECT_EQ(w[0].val.from, Month::from_ym(2012, 5));
  EXPECT_EQ(w[0].val.to, Month::from_ym(2012, 6));
  EXPECT_EQ(w.size(), 6u);
}

TEST(PlanWindows, DefaultValidationLengthIsThirdOfWindow) {
  EXPECT_EQ(plan(WindowMode::Rolling, 6).resolved_val_len(), 2);
  EXPECT_EQ(plan(WindowMode::Rolling, 2).resolved_val_len(), 1);
  EXPECT_EQ(plan(WindowMode::Rolling, 12).resolved_val_len(), 4);
}

TEST(PlanWindows, InvalidPlansRejected) {
  EXPECT_THROW(plan_windows(plan(WindowMode::Rolling, 6, 6), kJan2012, kJan2012 + 20), InvalidArgument);
  EXPECT_THROW(plan_windows(plan(WindowMode::Rolling, 1), kJan2012, kJan2012 + 20), InvalidArgument);
}

TEST(PlanWindowsProperty, RollingLengthConstantRecursiveGrowsByOne) {
  for (int M = 2; M <= 12; ++M) {
    const auto r = plan_windows(plan(WindowMode::Rolling, M), kJan2012, kJan2012 + 40);
    const auto c = plan_windows(plan(WindowMode::Recursive, M), kJan2012, kJan2012 + 40);
    ASSERT_EQ(r.size(), c.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_EQ(r[i].train.length() + r[i].val.length(), M);
      EXPECT_EQ(r[i].val.to, r[i].target - 1);
      EXPECT_EQ(c[i].train.from, kJan2012);
      if (i > 0) {
        EXPECT_EQ(r[i].train.length(), r[i - 1].train.length());
        EXPECT_EQ(c[i].train.length(), c[i - 1].train.length() + 1);
      }
      EXPECT_GE(r[i].target, kJan2012 + M);
    }
  }
}

TEST(WalkForward, SinglePointGridEqualsFitOncePredictOnce) {
  const auto panel = small_panel();
  const auto p = plan(WindowMode::Rolling, 6);
  HarnessOptions opt;
  opt.seed = 99;
  const auto res = run_walk_forward(panel, p, LearnerKind::RF, one_point(LearnerKind::RF), FeatureSet::All, opt);
  const auto months = panel.months();
  const auto windows = plan_windows(p, months.front(), months.back());
  ASSERT_EQ(res.predictions.choices.size(), windows.size());
  std::size_t k = 0;
  for (const auto& w : windows) {
    auto spec = one_point(LearnerKind::RF)[0];
    spec.seed = derive_seed(99, static_cast<std::uint64_t>(w.target.value));
    const auto window = build_slice(panel, FeatureSet::All, {w.train.from, w.val.to});
    const auto target = build_slice(panel, FeatureSet::All, {w.target, w.target});
    const auto pred = predict(fit(spec, window.X, window.y), target.X);
    for (std::size_t i = 0; i < pred.size(); ++i, ++k) {
      ASSERT_LT(k, res.predictions.entries.size());
      EXPECT_EQ(res.predictions.entries[k].bond_id, target.keys[i].bond_id);
      EXPECT_EQ(res.predictions.entries[k].predicted, pred[i]);
    }
  }
  EXPECT_EQ(k, res.predictions.entries.size());
}

TEST(WalkForward, ChoicesOnePerPredictedMonthWithinPlanRange) {
  const auto panel = small_panel();
  const auto p = plan(WindowMode::Recursive, 6);
  const auto res = run_walk_forward(panel, p, LearnerKind::Ridge, {}, FeatureSet::Traditional);
  const auto& ps = res.predictions;
  std::set<Month> months;
  std::set<std::pair<std::string, Month>> keys;
  for (const auto& e : ps.entries) {
    months.insert(e.month);
    EXPECT_TRUE(keys.insert({e.bond_id, e.month}).second);
    EXPECT_GE(e.month, kJan2012 + 6);
  }
  EXPECT_EQ(months.size(), ps.choices.size());
  for (const auto& c : ps.choices) EXPECT_TRUE(months.count(c.month));
}

TEST(WalkForward, GridSelectionPicksValidationMinimizerFirstOnTies) {
  const auto panel = small_panel();
  auto grid = one_point(LearnerKind::Ridge);
  grid.push_back(grid[0]);  // exact duplicate ties with the first point
  grid[1].lambda = 0.01;
  auto bad = grid[0];
  bad.lambda = 1e6;
  grid.insert(grid.begin(), bad);
  const auto res = run_walk_forward(panel, plan(WindowMode::Rolling, 6), LearnerKind::Ridge, grid, FeatureSet::All);
  for (const auto& c : res.predictions.choices) EXPECT_EQ(c.spec.lambda, 0.01);
}

TEST(WalkForward, StagedGridScoresEqualSeparateFits) {
  const auto panel = small_panel();
  const auto p = plan(WindowMode::Rolling, 6);
  for (auto kind : {LearnerKind::RF, LearnerKind::GBDT, LearnerKind::XGB, LearnerKind::AdaBoost}) {
    const auto grid = tiny_grid(kind);
    const auto joint = run_walk_forward(panel, p, kind, grid, FeatureSet::All);
    for (std::size_t m = 0; m < joint.predictions.choices.size(); ++m) {
      const auto& c = joint.predictions.choices[m];
      // Re-score every grid point by an independent fit; the recorded winner must be the argmin.
      const auto months = panel.months();
      const auto w = plan_windows(p, months.front(), months.back())[m];
      const auto train = build_slice(panel, FeatureSet::All, w.train);
      const auto val = build_slice(panel, FeatureSet::All, w.val);
      double best = std::numeric_limits<double>::infinity();
      for (auto s : grid) {
        s.seed = c.spec.seed;
        const auto pr = predict(fit(s, train.X, train.y), val.X);
        best = std::min(best, detail::rmse(pr, val.y));
      }
      EXPECT_NEAR(c.val_rmse, best, 1e-12) << to_string(kind);
    }
  }
}

TEST(WalkForward, NoiselessSynthRfBeatsTenthOfSpreadSd) {
  synth::SynthSpec s;
  s.n_bonds = 100;
  s.n_months = 20;
  s.noise_sd = 0.0;
  s.bond_mean_sd = 0.0;
  s.bond_innovation_sd = 0.0;
  s.missing_rate = 0.0;
  s.terms = {{"F1", synth::TermForm::Linear, 1.0, "", 0.0}, {"NF1", synth::TermForm::Threshold, 1.0, "", 0.0},
             {"NF2", synth::TermForm::Interaction, 0.0, "F2", 0.0}};
  const auto panel = preprocess(synth::generate(s).first);
  LearnerSpec rf;
  rf.kind = LearnerKind::RF;
  rf.n_trees = 50;
  rf.max_features = 24;
  const auto res = run_walk_forward(panel, plan(WindowMode::Rolling, 12), LearnerKind::RF, {rf}, FeatureSet::All);
  std::vector<double> spreads;
  for (const auto& r : panel.rows) spreads.push_back(r.spread);
  EXPECT_LT(eval(res.predictions).rmse, 0.1 * sample_sd(spreads));
}

TEST(WalkForward, EmptyTrainingSliceRecordedAsGap) {
  auto panel = small_panel(20, 14);
  std::erase_if(panel.rows, [](const ObservationRow& r) { return r.month <= Month::from_ym(2012, 4); });
  const auto res =
      run_walk_forward(panel, plan(WindowMode::Rolling, 4, 1), LearnerKind::Ridge, one_point(LearnerKind::Ridge),
                       FeatureSet::All);
  // Panel starts in May; the first target (September) trains on May-July, all lag-valid except May.
  EXPECT_TRUE(res.predictions.gaps.empty() || res.predictions.gaps.front().month == Month::from_ym(2012, 9));
  std::erase_if(panel.rows, [](const ObservationRow& r) { return r.month == Month::from_ym(2012, 7); });
  const auto gapped =
      run_walk_forward(panel, plan(WindowMode::Rolling, 4, 1), LearnerKind::Ridge, one_point(LearnerKind::Ridge),
                       FeatureSet::All);
  ASSERT_FALSE(gapped.predictions.gaps.empty());
  for (const auto& g : gapped.predictions.gaps)
    for (const auto& e : gapped.predictions.entries) EXPECT_NE(e.month, g.month);
}

// ---------------------------------------------------------------------------
// No look-ahead and determinism
// ---------------------------------------------------------------------------

TEST(NoLookAhead, MutatingFutureRowsLeavesPastPredictionsBitIdentical) {
  const auto panel = small_panel(20, 16, 31);
  HarnessOptions opt;
  opt.seed = 4;
  const Month cut = Month::from_ym(2012, 11);
  for (auto kind : {LearnerKind::RF, LearnerKind::XGB, LearnerKind::AdaBoost, LearnerKind::Lasso}) {
    for (auto mode : {WindowMode::Rolling, WindowMode::Recursive}) {
      const auto grid = kind == LearnerKind::Lasso ? std::vector<LearnerSpec>{} : tiny_grid(kind);
      const auto base = run_walk_forward(panel, plan(mode, 6), kind, grid, FeatureSet::All, opt);
      auto mutated = panel;
      Rng rng(123);
      for (auto& r : mutated.rows) {
        if (r.month > cut) r.spread = 50 * rng.normal();
        if (r.month >= cut) {
          for (auto& v : r.features) v = 10 * rng.normal();
          r.rating_code = 1 + static_cast<double>(rng.below(10));
        }
      }
      const auto after = run_walk_forward(mutated, plan(mode, 6), kind, grid, FeatureSet::All, opt);
      std::size_t compared = 0;
      for (std::size_t i = 0; i < base.predictions.entries.size(); ++i) {
        const auto& e = base.predictions.entries[i];
        if (e.month > cut) continue;
        const auto& f = after.predictions.entries[i];
        ASSERT_EQ(e.bond_id, f.bond_id);
        ASSERT_EQ(e.month, f.month);
        EXPECT_EQ(std::memcmp(&e.predicted, &f.predicted, sizeof(double)), 0) << to_string(kind);
        EXPECT_EQ(std::memcmp(&e.benchmark, &f.benchmark, sizeof(double)), 0) << to_string(kind);
        ++compared;
      }
      EXPECT_GT(compared, 50u);
    }
  }
}

TEST(Determinism, IdenticalAcrossRunsAndThreadCounts) {
  const auto panel = small_panel();
  for (auto kind : {LearnerKind::RF, LearnerKind::GBDT, LearnerKind::ENet}) {
    HarnessOptions one, many;
    many.threads = 4;
    one.collect_shap = many.collect_shap = true;
    const auto grid = kind == LearnerKind::ENet ? std::vector<LearnerSpec>{} : tiny_grid(kind);
    const auto a = run_walk_forward(panel, plan(WindowMode::Rolling, 6), kind, grid, FeatureSet::All, one);
    const auto b = run_walk_forward(panel, plan(WindowMode::Rolling, 6), kind, grid, FeatureSet::All, many);
    const auto c = run_walk_forward(panel, plan(WindowMode::Rolling, 6), kind, grid, FeatureSet::All, one);
    EXPECT_EQ(metadata_json(a.predictions), metadata_json(b.predictions));
    ASSERT_EQ(a.predictions.entries.size(), b.predictions.entries.size());
    for (std::size_t i = 0; i < a.predictions.entries.size(); ++i) {
      EXPECT_EQ(a.predictions.entries[i].predicted, b.predictions.entries[i].predicted);
      EXPECT_EQ(a.predictions.entries[i].predicted, c.predictions.entries[i].predicted);
    }
    ASSERT_EQ(a.shap.size(), b.shap.size());
    for (std::size_t m = 0; m < a.shap.size(); ++m)
      for (std::size_t r = 0; r < a.shap[m].rows.size(); ++r) EXPECT_EQ(a.shap[m].rows[r].contributions, b.shap[m].rows[r].contributions);
  }
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

TEST(Benchmark, ThreePointHandOls) {
  const std::vector<double> x = {1, 2, 3}, y = {1, 3, 2};
  const auto b = fit_benchmark(x, y);
  EXPECT_FALSE(b.fallback);
  EXPECT_NEAR(b.slope, 0.5, 1e-15);
  EXPECT_NEAR(b.intercept, 1.0, 1e-15);
  EXPECT_NEAR(b.predict(4), 3.0, 1e-15);
  EXPECT_EQ(b.predict(kMissing), 2.0);
}

TEST(Benchmark, ConstantPredictorFallsBackToWindowMean) {
  const std::vector<double> x = {5, 5, 5}, y = {1, 2, 6};
  const auto b = fit_benchmark(x, y);
  EXPECT_TRUE(b.fallback);
  EXPECT_FALSE(b.note.empty());
  EXPECT_EQ(b.predict(5), 3.0);
}

TEST(Benchmark, PerfectlyLinearPredictorGivesUnitR2) {
  auto panel = oracle::make_panel(12, 10, {"F1"}, [](int b, int t, ObservationRow& r) {
    r.rating_code = 1 + (b + t) % 7;
    r.spread = 0.0;
  });
  // spread at t is linear in the rating code at t-1.
  for (std::size_t i = 1; i < panel.rows.size(); ++i)
    if (panel.rows[i].bond_id == panel.rows[i - 1].bond_id) panel.rows[i].spread = 0.3 + 0.45 * panel.rows[i - 1].rating_code;
  const auto p = run_benchmark(panel, plan(WindowMode::Rolling, 4));
  ASSERT_FALSE(p.entries.empty());
  for (const auto& e : p.entries) EXPECT_NEAR(e.predicted, e.actual, 1e-12);
  EXPECT_NEAR(eval(p).r2, 1.0, 1e-12);
}

TEST(Benchmark, AlternateColumnAndUnknownColumn) {
  auto panel = oracle::make_panel(6, 8, {"F1", "F2"}, [](int b, int t, ObservationRow& r) {
    r.features = {static_cast<double>(b), static_cast<double>(t)};
    r.spread = 1.0 + b;
  });
  const auto p = run_benchmark(panel, plan(WindowMode::Rolling, 4), "F1");
  for (const auto& e : p.entries) EXPECT_NEAR(e.predicted, e.actual, 1e-12);
  EXPECT_THROW(run_benchmark(panel, plan(WindowMode::Rolling, 4), "nope"), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Joins and truncation
// ---------------------------------------------------------------------------

TEST(Align, IdenticalDisjointAndSingleton) {
  PredictionSet a, b, c, d;
  a.entries = {{"x", kJan2012, 1, 1, 1}, {"y", kJan2012, 2, 2, 2}};
  b = a;
  auto full = align(a, b);
  EXPECT_EQ(full.a.size(), 2u);
  EXPECT_EQ(full.dropped_a + full.dropped_b, 0u);
  c.entries = {{"z", kJan2012, 1, 1, 1}};
  EXPECT_THROW(align(a, c), Error);
  d.entries = {{"y", kJan2012, 2, 5, 2}, {"q", kJan2012 + 1, 0, 0, 0}};
  const auto one = align(a, d);
  ASSERT_EQ(one.a.size(), 1u);
  EXPECT_EQ(one.b[0].predicted, 5.0);
  EXPECT_EQ(one.dropped_a, 1u);
  EXPECT_EQ(one.dropped_b, 1u);
}

TEST(Truncate, EqualsFreshFitWithSmallerCount) {
  Rng rng(3);
  Matrix X(0, 3);
  std::vector<double> y;
  for (int i = 0; i < 80; ++i) {
    const double r[] = {rng.normal(), rng.normal(), rng.normal()};
    X.append_row(r);
    y.push_back(r[0] - r[1] * r[2] + 0.3 * rng.normal());
  }
  for (auto kind : {LearnerKind::RF, LearnerKind::GBDT, LearnerKind::XGB, LearnerKind::AdaBoost}) {
    LearnerSpec s;
    s.kind = kind;
    s.n_trees = 12;
    s.max_depth = 3;
    s.seed = 8;
    const auto big = std::get<EnsembleModel>(fit(s, X, y));
    for (int k : {1, 5, 12}) {
      s.n_trees = k;
      const auto fresh = predict(fit(s, X, y), X);
      const auto cut = predict(truncate(big, static_cast<std::size_t>(k)), X);
      const auto staged = staged_predict(big, X, {static_cast<std::size_t>(k)})[0];
      for (std::size_t i = 0; i < y.size(); ++i) {
        EXPECT_NEAR(cut[i], fresh[i], 1e-12) << to_string(kind) << " k=" << k;
        EXPECT_NEAR(staged[i], fresh[i], 1e-12) << to_string(kind) << " k=" << k;
      }
    }
  }
}
