#include <gtest/gtest.h>

#include <sstream>

#include "cspread/panel.hpp"
#include "oracles.hpp"

using namespace cspread;

namespace {

Panel parse(const std::string& text, const PanelSchema& schema = {}) {
  std::istringstream in(text);
  return load_panel(csv::parse(in), schema);
}

const char* kThreeRows =
    "bond_id,month,spread,rating_code,industry,F1,NF2_tone,B3\n"
    "b1,2020-01,1.5,3,Energy,0.1,1,0\n"
    "b1,2020-02,1.7,3,Energy,n/a,0,1\n"
    "b2,2020-01,2.5,5,Retail,0.4,1,0\n";

}  // namespace

TEST(LoadPanel, ParsesWellFormedCsv) {
  const auto p = parse(kThreeRows);
  ASSERT_EQ(p.rows.size(), 3u);
  ASSERT_EQ(p.manifest.size(), 3u);
  EXPECT_EQ(p.manifest.entries[0].id, "F1");
  EXPECT_EQ(p.manifest.entries[1].group, FeatureGroup::NF);
  EXPECT_EQ(p.manifest.entries[1].id, "NF2");
  EXPECT_EQ(p.manifest.entries[2].group, FeatureGroup::B);
  EXPECT_EQ(p.rows[0].industry, "Energy");
  EXPECT_DOUBLE_EQ(p.rows[2].rating_code, 5.0);
}

TEST(LoadPanel, UnparseableCellBecomesMissingAgainstHandParse) {
  const auto p = parse(kThreeRows);
  // Hand parse of the same fixture, sorted by (bond, month).
  const std::vector<std::vector<double>> expected = {{0.1, 1, 0}, {NAN, 0, 1}, {0.4, 1, 0}};
  const std::vector<double> spreads = {1.5, 1.7, 2.5};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(p.rows[i].spread, spreads[i]);
    for (std::size_t j = 0; j < 3; ++j) {
      if (std::isnan(expected[i][j]))
        EXPECT_TRUE(is_missing(p.rows[i].features[j]));
      else
        EXPECT_DOUBLE_EQ(p.rows[i].features[j], expected[i][j]);
    }
  }
}

TEST(LoadPanel, DuplicateKeyRejectedWithKey) {
  try {
    parse("bond_id,month,spread,F1\nb1,2020-03,1,0\nb1,2020-03,2,0\n");
    FAIL() << "expected DuplicateKeyError";
  } catch (const DuplicateKeyError& e) {
    EXPECT_NE(std::string(e.what()).find("b1, 2020-03"), std::string::npos);
  }
}

TEST(LoadPanel, UnknownGroupPrefixRejected) {
  EXPECT_THROW(parse("bond_id,month,spread,X1\nb1,2020-03,1,0\n"), InvalidArgument);
}

TEST(LoadPanel, GroupOverrideAccepted) {
  PanelSchema s;
  s.group_overrides["altman"] = FeatureGroup::F;
  const auto p = parse("bond_id,month,spread,altman\nb1,2020-03,1,0\n", s);
  EXPECT_EQ(p.manifest.entries[0].group, FeatureGroup::F);
}

TEST(ComputeSpreads, ExactNode) {
  std::vector<CurvePoint> c = {{Month(600), 12, 2.0}, {Month(600), 24, 3.0}};
  std::vector<BondYield> y = {{"a", Month(600), 5.0, 24}};
  EXPECT_DOUBLE_EQ(compute_spreads(y, c)[0].spread, 2.0);
}

TEST(ComputeSpreads, LinearInterpolation) {
  std::vector<CurvePoint> c = {{Month(600), 12, 2.0}, {Month(600), 24, 3.0}};
  std::vector<BondYield> y = {{"a", Month(600), 5.0, 18}};
  EXPECT_DOUBLE_EQ(compute_spreads(y, c)[0].spread, 2.5);
}

TEST(ComputeSpreads, ClampsBelowCurve) {
  std::vector<CurvePoint> c = {{Month(600), 12, 2.0}, {Month(600), 24, 3.0}};
  std::vector<BondYield> y = {{"a", Month(600), 5.0, 6}};
  EXPECT_DOUBLE_EQ(compute_spreads(y, c)[0].spread, 3.0);
}

TEST(ComputeSpreads, MissingMonthListed) {
  std::vector<CurvePoint> c = {{Month(600), 12, 2.0}, {Month(600), 24, 3.0}};
  std::vector<BondYield> y = {{"a", Month(601), 5.0, 6}, {"b", Month(603), 5.0, 6}};
  try {
    compute_spreads(y, c);
    FAIL();
  } catch (const InvalidArgument& e) {
    const std::string w = e.what();
    EXPECT_NE(w.find(Month(601).str()), std::string::npos);
    EXPECT_NE(w.find(Month(603).str()), std::string::npos);
  }
}

TEST(ComputeSpreads, MatchesInterpolationOracleOnRandomCurves) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(6));
    std::vector<CurvePoint> c;
    std::vector<std::pair<double, double>> pts;
    std::set<double> used;
    while (static_cast<int>(c.size()) < k) {
      const double m = 1 + std::floor(rng.uniform() * 360);
      if (!used.insert(m).second) continue;
      const double v = 1 + 3 * rng.uniform();
      c.push_back({Month(600), m, v});
      pts.push_back({m, v});
    }
    for (int q = 0; q < 20; ++q) {
      const double mat = rng.uniform() * 400;
      const double ytm = 2 + 5 * rng.uniform();
      std::vector<BondYield> y = {{"x", Month(600), ytm, mat}};
      EXPECT_NEAR(compute_spreads(y, c)[0].spread, ytm - oracle::interpolate(pts, mat), 1e-12);
    }
  }
}

namespace {

Panel column_panel(const std::vector<std::vector<double>>& by_month_values) {
  // One feature F1; month t holds the listed bond values.
  std::size_t bonds = 0;
  for (const auto& m : by_month_values) bonds = std::max(bonds, m.size());
  auto p = oracle::make_panel(static_cast<int>(bonds), static_cast<int>(by_month_values.size()), {"F1"},
                              [&](int b, int t, ObservationRow& r) {
                                r.spread = 1.0;
                                const auto& vals = by_month_values[static_cast<std::size_t>(t)];
                                if (static_cast<std::size_t>(b) >= vals.size()) r.bond_id.clear();
                                else r.features[0] = vals[static_cast<std::size_t>(b)];
                              });
  p.preprocessed = false;
  return p;
}

}  // namespace

TEST(Preprocess, ZScoreUsesSampleSd) {
  const auto p = preprocess(column_panel({{1, 2, 3}}), {0.0, true});
  EXPECT_NEAR(p.rows[0].features[0], -1.0, 1e-12);
  EXPECT_NEAR(p.rows[1].features[0], 0.0, 1e-12);
  EXPECT_NEAR(p.rows[2].features[0], 1.0, 1e-12);
}

TEST(Preprocess, ConstantColumnCenteredWithWarning) {
  const auto p = preprocess(column_panel({{5, 5, 5}}), {0.01, true});
  for (const auto& r : p.rows) EXPECT_EQ(r.features[0], 0.0);
  ASSERT_EQ(p.warnings.size(), 1u);
  EXPECT_NE(p.warnings[0].find("zero-variance"), std::string::npos);
}

TEST(Preprocess, MonthMedianFillBeforeWinsorizing) {
  const auto p = preprocess(column_panel({{1, NAN, 3}}), {0.0, false});
  EXPECT_DOUBLE_EQ(p.rows[1].features[0], 2.0);
}

TEST(Preprocess, AllMissingMonthStaysMissing) {
  const auto p = preprocess(column_panel({{1, 2, 3}, {NAN, NAN, NAN}}), {0.0, false});
  for (const auto& r : p.rows)
    if (r.month == Month::from_ym(2012, 2)) {
      EXPECT_TRUE(is_missing(r.features[0]));
    }
}

TEST(Preprocess, DummyColumnsUntouched) {
  const auto p = preprocess(column_panel({{0, 1, 1, 0}}), {0.1, true});
  const std::vector<double> want = {0, 1, 1, 0};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(p.rows[i].features[0], want[i]);
}

TEST(Preprocess, WinsorizesAtType7Quantiles) {
  std::vector<double> v;
  for (int i = 0; i < 11; ++i) v.push_back(i * i);  // 0,1,4,...,100
  const auto p = preprocess(column_panel({v}), {0.1, false});
  // Type-7 at p=0.1 over 11 points: position 1 -> 1; at 0.9: position 9 -> 81.
  double lo = 1e9, hi = -1e9;
  for (const auto& r : p.rows) {
    lo = std::min(lo, r.features[0]);
    hi = std::max(hi, r.features[0]);
  }
  EXPECT_DOUBLE_EQ(lo, 1.0);
  EXPECT_DOUBLE_EQ(hi, 81.0);
}

TEST(Preprocess, TargetAndMechanismUntransformed) {
  auto raw = column_panel({{1, 2, 3}});
  for (auto& r : raw.rows) {
    r.spread = 7.5;
    r.mechanism.kz = 2.25;
    r.rating_code = 4;
  }
  const auto p = preprocess(raw);
  for (const auto& r : p.rows) {
    EXPECT_EQ(r.spread, 7.5);
    EXPECT_EQ(r.mechanism.kz, 2.25);
    EXPECT_EQ(r.rating_code, 4);
  }
}

TEST(PreprocessProperty, StandardizedColumnsHaveZeroMeanUnitSd) {
  Rng rng(5);
  auto p = oracle::make_panel(30, 10, {"F1", "F2", "NF1"}, [&](int, int, ObservationRow& r) {
    r.spread = 1;
    for (auto& v : r.features) v = rng.uniform() < 0.1 ? kMissing : std::exp(rng.normal());
  });
  p.preprocessed = false;
  const auto q = preprocess(p);
  for (std::size_t j = 0; j < 3; ++j) {
    std::vector<double> col;
    for (const auto& r : q.rows)
      if (!is_missing(r.features[j])) col.push_back(r.features[j]);
    EXPECT_LT(std::abs(mean(col)), 1e-9);
    EXPECT_LT(std::abs(sample_sd(col) - 1.0), 1e-9);
  }
}

TEST(PreprocessProperty, IdempotentOnProcessedCompleteData) {
  // (n - 1) p is an integer, so the clipped order statistics are quantile nodes.
  Rng rng(8);
  std::vector<double> v(101);
  for (auto& x : v) x = rng.normal() * 3 + 1;
  const auto once = preprocess(column_panel({v}), {0.01, true});
  const auto twice = preprocess(once, {0.01, true});
  for (std::size_t i = 0; i < once.rows.size(); ++i)
    EXPECT_NEAR(once.rows[i].features[0], twice.rows[i].features[0], 1e-9);
}

TEST(BuildSlice, PairsPreviousMonthFeaturesWithCurrentSpread) {
  auto p = oracle::make_panel(1, 2, {"F1"}, [](int, int t, ObservationRow& r) {
    r.features[0] = 10 + t;
    r.spread = 100 + t;
    r.rating_code = 50 + t;
  });
  const auto s = build_slice(p, FeatureSet::All, {Month::from_ym(2012, 2), Month::from_ym(2012, 2)});
  ASSERT_EQ(s.y.size(), 1u);
  EXPECT_EQ(s.X(0, 0), 10);
  EXPECT_EQ(s.y[0], 101);
  EXPECT_EQ(s.bench[0], 50);
}

TEST(BuildSlice, GapDropsRow) {
  auto p = oracle::make_panel(1, 3, {"F1"}, [](int, int t, ObservationRow& r) {
    r.spread = 1;
    if (t == 1) r.bond_id.clear();
  });
  EXPECT_THROW(build_slice(p, FeatureSet::All, {Month::from_ym(2012, 3), Month::from_ym(2012, 3)}), EmptySliceError);
}

TEST(BuildSlice, EnumeratedTwoBondsThreeMonths) {
  auto p = oracle::make_panel(2, 3, {"F1"}, [](int b, int t, ObservationRow& r) {
    r.features[0] = b * 10 + t;
    r.spread = b * 100 + t;
  });
  const auto s = build_slice(p, FeatureSet::All, {Month::from_ym(2012, 2), Month::from_ym(2012, 3)});
  ASSERT_EQ(s.y.size(), 4u);
  const std::vector<std::pair<std::string, int>> keys = {{"b000", 1}, {"b000", 2}, {"b001", 1}, {"b001", 2}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(s.keys[i].bond_id, keys[i].first);
    EXPECT_EQ(s.keys[i].month, Month::from_ym(2012, 1) + keys[i].second);
    const int b = keys[i].first == "b000" ? 0 : 1;
    EXPECT_EQ(s.X(i, 0), b * 10 + keys[i].second - 1);
    EXPECT_EQ(s.y[i], b * 100 + keys[i].second);
  }
}

TEST(BuildSlice, FeatureSetsSelectGroups) {
  auto p = oracle::make_panel(1, 2, {"M1", "F1", "NF1", "B1"}, [](int, int, ObservationRow& r) { r.spread = 1; });
  EXPECT_EQ(build_slice(p, FeatureSet::Traditional, {Month::from_ym(2012, 2), Month::from_ym(2012, 2)}).X.cols(), 3u);
  EXPECT_EQ(build_slice(p, FeatureSet::All, {Month::from_ym(2012, 2), Month::from_ym(2012, 2)}).X.cols(), 4u);
}

TEST(BuildSliceProperty, NeverPairsFeatureMonthAtOrAfterTarget) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    // Feature value encodes its own month, so look-ahead is directly visible.
    auto p = oracle::make_panel(8, 12, {"F1"}, [&](int, int t, ObservationRow& r) {
      if (rng.uniform() < 0.3) r.bond_id.clear();
      r.features[0] = t;
      r.spread = rng.uniform() < 0.1 ? kMissing : 1.0;
    });
    const auto s = build_supervised(p, FeatureSet::All, {Month::from_ym(2012, 1), Month::from_ym(2012, 12)});
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      const int target = s.keys[i].month - Month::from_ym(2012, 1);
      EXPECT_EQ(s.X(i, 0), target - 1);
    }
  }
}

TEST(FilterDates, FullRangeIsIdentity) {
  auto p = oracle::make_panel(2, 4, {"F1"}, [](int, int t, ObservationRow& r) { r.spread = t; });
  const auto q = filter_dates(p, Month::from_ym(2012, 1), Month::from_ym(2012, 4));
  ASSERT_EQ(q.rows.size(), p.rows.size());
  for (std::size_t i = 0; i < p.rows.size(); ++i) EXPECT_EQ(q.rows[i].month, p.rows[i].month);
}

TEST(FilterDates, RestrictsAndAllowsEmpty) {
  auto p = oracle::make_panel(2, 24, {"F1"}, [](int, int, ObservationRow& r) { r.spread = 1; });
  const auto q = filter_dates(p, Month::from_ym(2013, 1), Month::from_ym(2013, 12));
  EXPECT_EQ(q.rows.size(), 24u);
  for (const auto& r : q.rows) EXPECT_EQ(r.month.year(), 2013);
  EXPECT_TRUE(filter_dates(p, Month::from_ym(2030, 1), Month::from_ym(2030, 2)).rows.empty());
  EXPECT_THROW(filter_dates(p, Month::from_ym(2013, 2), Month::from_ym(2013, 1)), InvalidArgument);
}
