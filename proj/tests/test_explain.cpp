#include <gtest/gtest.h>

#include "cspread/explain.hpp"
#include "cspread/learners.hpp"
#include "oracles.hpp"

using namespace cspread;

namespace {

Tree leaf(double v, double cover) {
  Tree t;
  t.nodes.resize(1);
  t.nodes[0].value = v;
  t.nodes[0].cover = cover;
  return t;
}

Tree stump(int feature, double thr, double lv, double rv, double lc, double rc) {
  Tree t;
  t.nodes.resize(3);
  t.nodes[0] = {feature, thr, true, 1, 2, 0.0, lc + rc, {}};
  t.nodes[1].value = lv;
  t.nodes[1].cover = lc;
  t.nodes[2].value = rv;
  t.nodes[2].cover = rc;
  return t;
}

Matrix random_matrix(Rng& rng, std::size_t n, std::size_t m) {
  Matrix X(0, m);
  std::vector<double> buf(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : buf) v = rng.normal();
    X.append_row(buf);
  }
  return X;
}

std::vector<double> target(const Matrix& X, Rng& rng) {
  std::vector<double> y(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const double x3 = X.cols() > 3 ? X(i, 3) : 0.0;
    y[i] = X(i, 0) + (X(i, 1) > 0.3 ? 2 : 0) + X(i, 2) * x3 + 0.3 * rng.normal();
  }
  return y;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

const std::function<double(const TreeNode&)> kValue = [](const TreeNode& n) { return n.value; };

}  // namespace

TEST(TreeShap, SingleLeafHasZeroContributions) {
  const auto t = leaf(4.5, 10);
  const std::vector<double> x = {1, 2};
  const auto s = tree_shap(t, x);
  EXPECT_EQ(s.base_value, 4.5);
  EXPECT_EQ(s.contributions, std::vector<double>(2, 0.0));
}

TEST(TreeShap, EqualCoverStumpRoutedRight) {
  const auto t = stump(0, 0.5, 0, 10, 5, 5);
  const std::vector<double> x = {1};
  const auto s = tree_shap(t, x);
  EXPECT_DOUBLE_EQ(s.base_value, 5.0);
  ASSERT_EQ(s.contributions.size(), 1u);
  EXPECT_DOUBLE_EQ(s.contributions[0], 5.0);
  EXPECT_EQ(oracle::shapley(t, x, 1, kValue)[0], 5.0);
}

TEST(TreeShap, MissingCoverRejected) {
  auto t = stump(0, 0.5, 0, 10, 5, 5);
  t.nodes[1].cover = 0;
  const std::vector<double> x = {1};
  EXPECT_THROW(tree_shap(t, x), InvalidArgument);
}

TEST(TreeShapProperty, MatchesExhaustiveShapleyOnSmallTrees) {
  Rng rng(31);
  int checked = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t m = 1 + rng.below(4);
    const std::size_t n = 10 + rng.below(60);
    auto X = random_matrix(rng, n, m);
    for (std::size_t i = 0; i < n; ++i)
      if (rng.uniform() < 0.1) X.row(i)[rng.below(m)] = kMissing;
    std::vector<double> y(n);
    for (auto& v : y) v = rng.normal();
    TreeParams p;
    p.max_depth = 1 + static_cast<int>(rng.below(3));
    const auto t = fit_tree(X, y, std::vector<double>(n, 1.0), p);
    for (int q = 0; q < 5; ++q) {
      std::vector<double> x(m);
      for (auto& v : x) v = rng.uniform() < 0.1 ? kMissing : rng.normal();
      const auto s = tree_shap(t, x);
      const auto phi = oracle::shapley(t, x, static_cast<int>(m), kValue);
      for (std::size_t j = 0; j < m; ++j) ASSERT_NEAR(s.contributions[j], phi[j], 1e-9) << "trial " << trial;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 2000);
}

TEST(TreeShap, DuplicatedFeatureConjunctionIsSymmetric) {
  // f = 10 * 1[x0 > .5 and x1 > .5] with symmetric covers.
  Tree t;
  t.nodes.resize(5);
  t.nodes[0] = {0, 0.5, true, 1, 2, 0.0, 4, {}};
  t.nodes[1].value = 0;
  t.nodes[1].cover = 2;
  t.nodes[2] = {1, 0.5, true, 3, 4, 0.0, 2, {}};
  t.nodes[3].value = 0;
  t.nodes[3].cover = 1;
  t.nodes[4].value = 10;
  t.nodes[4].cover = 1;
  const std::vector<double> x = {1, 1};
  const auto s = tree_shap(t, x);
  EXPECT_DOUBLE_EQ(s.base_value, 2.5);
  EXPECT_DOUBLE_EQ(s.contributions[0], s.contributions[1]);
  EXPECT_DOUBLE_EQ(s.contributions[0], 3.75);
}

TEST(TreeShap, FeatureAbsentFromEveryTreeGetsExactZero) {
  Rng rng(32);
  auto X = random_matrix(rng, 100, 4);
  for (std::size_t i = 0; i < 100; ++i) X.row(i)[2] = 0.0;  // constant: never split on
  const auto y = target(X, rng);
  for (auto kind : {LearnerKind::RF, LearnerKind::GBDT, LearnerKind::XGB, LearnerKind::AdaBoost}) {
    LearnerSpec s;
    s.kind = kind;
    s.n_trees = 10;
    s.max_depth = 3;
    const auto m = std::get<EnsembleModel>(fit(s, X, y));
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(tree_shap(m, X.row(i)).contributions[2], 0.0);
  }
}

TEST(ShapProperty, LocalAccuracyOnThousandRowsAcrossModelKinds) {
  Rng rng(33);
  const auto X = random_matrix(rng, 200, 5);
  const auto y = target(X, rng);
  const auto Z = random_matrix(rng, 1000, 5);
  const auto bg = background_means(X);
  for (auto kind : {LearnerKind::RF, LearnerKind::AdaBoost, LearnerKind::XGB, LearnerKind::GBDT, LearnerKind::Lasso,
                    LearnerKind::Ridge, LearnerKind::ENet, LearnerKind::OLS}) {
    LearnerSpec s;
    s.kind = kind;
    s.n_trees = 20;
    s.max_depth = 4;
    s.lambda = 0.01;
    s.alpha = 0.5;
    const auto model = fit(s, X, y);
    const auto pred = predict(model, Z);
    for (std::size_t r = 0; r < Z.rows(); ++r) {
      const auto sv = shap(model, Z.row(r), bg);
      ASSERT_NEAR(sv.base_value + sum(sv.contributions), pred[r], 1e-8) << to_string(kind);
      ASSERT_NEAR(sv.prediction, pred[r], 1e-8);
    }
  }
}

TEST(ShapProperty, LocalAccuracyForClassifierScores) {
  Rng rng(34);
  const auto X = random_matrix(rng, 150, 3);
  std::vector<double> y(150);
  for (std::size_t i = 0; i < 150; ++i) y[i] = X(i, 0) + 0.5 * X(i, 1) < -0.5 ? 0 : X(i, 0) < 0.6 ? 1 : 2;
  LearnerSpec s;
  s.n_trees = 10;
  s.max_depth = 3;
  const auto rf = fit_rf_classifier(X, y, s, 3);
  s.kind = LearnerKind::XGB;
  const auto xgb = fit_xgb_classifier(X, y, s, 3);
  for (const auto* m : {&rf, &xgb})
    for (std::size_t r = 0; r < 100; ++r)
      for (int k = 0; k < 3; ++k) {
        const auto sv = tree_shap(*m, X.row(r), k);
        EXPECT_NEAR(sv.base_value + sum(sv.contributions), class_scores(*m, X.row(r))[static_cast<std::size_t>(k)],
                    1e-8);
      }
  EXPECT_THROW(tree_shap(rf, X.row(0), 3), InvalidArgument);
}

TEST(LinearShap, AtBackgroundMeansAllZero) {
  LinearModel m;
  m.intercept = 1;
  m.coefficients = {2, -1, 0.5};
  const std::vector<double> bg = {0.1, 0.2, 0.3};
  const auto s = linear_shap(m, bg, bg);
  EXPECT_EQ(s.contributions, std::vector<double>(3, 0.0));
  EXPECT_DOUBLE_EQ(s.base_value, 1 + 0.2 - 0.2 + 0.15);
}

TEST(LinearShap, Definitional) {
  LinearModel m;
  m.coefficients = {2};
  const std::vector<double> x = {4}, bg = {1};
  EXPECT_EQ(linear_shap(m, x, bg).contributions[0], 6.0);
  EXPECT_THROW(linear_shap(m, std::vector<double>{1, 2}, bg), InvalidArgument);
}

TEST(LinearShap, RandomFiveFeatureLocalAccuracy) {
  Rng rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    LinearModel m;
    m.intercept = rng.normal();
    std::vector<double> x(5), bg(5);
    for (int j = 0; j < 5; ++j) {
      m.coefficients.push_back(rng.normal());
      x[j] = rng.normal();
      bg[j] = rng.normal();
    }
    const auto s = linear_shap(m, x, bg);
    Matrix X(0, 5);
    X.append_row(x);
    EXPECT_NEAR(s.base_value + sum(s.contributions), predict(m, X)[0], 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

namespace {

std::vector<FeatureEntry> columns(int n) {
  std::vector<FeatureEntry> c;
  for (int j = 1; j <= n; ++j) c.push_back({"F" + std::to_string(j), FeatureGroup::F, "F" + std::to_string(j)});
  return c;
}

ShapVector row(std::vector<double> c) { return {0.0, std::move(c), 0.0}; }

}  // namespace

TEST(AggregateImportance, OneMonthOneRow) {
  const auto rep = aggregate_importance({{Month(500), {row({-0.4, 0.1})}}}, columns(2));
  EXPECT_DOUBLE_EQ(rep.features[0].mean_abs, 0.4);
  EXPECT_DOUBLE_EQ(rep.features[0].mean, -0.4);
  EXPECT_DOUBLE_EQ(rep.features[1].mean_abs, 0.1);
  EXPECT_EQ(rep.features[0].rank, 1);
}

TEST(AggregateImportance, FullSampleIsUnweightedMeanOfMonths) {
  const auto rep = aggregate_importance(
      {{Month(500), {row({0.2})}}, {Month(501), {row({0.4}), row({-0.4}), row({0.4})}}}, columns(1));
  EXPECT_NEAR(rep.features[0].mean_abs, 0.3, 1e-15);
  EXPECT_EQ(rep.months.size(), 2u);
}

TEST(AggregateImportance, RanksArePermutationTiesById) {
  Rng rng(36);
  std::vector<MonthShap> months;
  for (int t = 0; t < 5; ++t) {
    MonthShap ms{Month(600 + t), {}};
    for (int r = 0; r < 10; ++r) ms.rows.push_back(row({rng.normal(), rng.normal(), 0.5, 0.5, rng.normal()}));
    months.push_back(ms);
  }
  auto cols = columns(5);
  cols[2].id = "F9";
  cols[3].id = "F4";
  const auto rep = aggregate_importance(months, cols);
  std::vector<int> ranks;
  for (const auto& f : rep.features) {
    ranks.push_back(f.rank);
    for (std::size_t m = 0; m < f.monthly_mean.size(); ++m)
      EXPECT_GE(f.monthly_mean_abs[m] + 1e-15, std::abs(f.monthly_mean[m]));
  }
  std::sort(ranks.begin(), ranks.end());
  EXPECT_EQ(ranks, (std::vector<int>{1, 2, 3, 4, 5}));
  EXPECT_LT(rep.features[3].rank, rep.features[2].rank);  // tie at 0.5: F4 before F9
}

TEST(AggregateImportance, GroupSubtotals) {
  std::vector<FeatureEntry> cols = {{"F1", FeatureGroup::F, "F1"}, {"NF1", FeatureGroup::NF, "NF1"},
                                    {"NF2", FeatureGroup::NF, "NF2"}};
  const auto rep = aggregate_importance({{Month(1), {row({1, 2, -3})}}}, cols);
  EXPECT_DOUBLE_EQ(rep.group_mean_abs.at(FeatureGroup::F), 1.0);
  EXPECT_DOUBLE_EQ(rep.group_mean_abs.at(FeatureGroup::NF), 5.0);
}
