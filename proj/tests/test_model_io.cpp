#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "cspread/explain.hpp"
#include "cspread/model_io.hpp"

using namespace cspread;

namespace {

struct Data {
  Matrix X{0, 4};
  std::vector<double> y;
};

Data data() {
  Rng rng(1);
  Data d;
  for (int i = 0; i < 120; ++i) {
    std::vector<double> x = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    if (i % 13 == 0) x[2] = kMissing;
    d.y.push_back(x[0] + (x[1] > 0 ? 1.0 / 3 : 0.0) + 0.1 * rng.normal());
    d.X.append_row(x);
  }
  return d;
}

}  // namespace

TEST(ModelIo, RoundTripIsBitExactForEveryKind) {
  const auto d = data();
  for (auto kind : {LearnerKind::RF, LearnerKind::AdaBoost, LearnerKind::GBDT, LearnerKind::XGB, LearnerKind::Lasso,
                    LearnerKind::Ridge, LearnerKind::ENet, LearnerKind::OLS}) {
    LearnerSpec s;
    s.kind = kind;
    s.n_trees = 15;
    s.max_depth = 4;
    s.lambda = 0.01;
    s.alpha = 0.5;
    s.seed = 77;
    const auto m = fit(s, d.X, d.y);
    const auto back = model_from_json(nlohmann::json::parse(to_json(m).dump()));
    EXPECT_EQ(to_json(back).dump(), to_json(m).dump()) << to_string(kind);
    const auto p1 = predict(m, d.X), p2 = predict(back, d.X);
    for (std::size_t i = 0; i < p1.size(); ++i) ASSERT_EQ(p1[i], p2[i]);
    const auto bg = background_means(d.X);
    EXPECT_EQ(shap(m, d.X.row(3), bg).contributions, shap(back, d.X.row(3), bg).contributions);
  }
}

TEST(ModelIo, ClassifierRoundTrip) {
  const auto d = data();
  std::vector<double> labels;
  for (double v : d.y) labels.push_back(v > 0.5 ? 2 : v > 0 ? 1 : 0);
  LearnerSpec s;
  s.n_trees = 10;
  for (const auto& m : {fit_rf_classifier(d.X, labels, s, 3), fit_xgb_classifier(d.X, labels, s, 3)}) {
    const auto back = std::get<EnsembleModel>(model_from_json(to_json(Model(m))));
    EXPECT_EQ(predict_class(back, d.X), predict_class(m, d.X));
    EXPECT_EQ(back.n_classes, 3);
    EXPECT_EQ(back.softmax, m.softmax);
  }
}

TEST(ModelIo, FileRoundTrip) {
  const auto d = data();
  LearnerSpec s;
  s.kind = LearnerKind::XGB;
  s.n_trees = 5;
  const auto m = fit(s, d.X, d.y);
  const auto path = (std::filesystem::temp_directory_path() / "cspread_model_io_test.json").string();
  save_model(m, path);
  EXPECT_EQ(predict(load_model(path), d.X), predict(m, d.X));
  std::remove(path.c_str());
  EXPECT_THROW(load_model(path), Error);
}

TEST(ModelIo, RejectsWrongFormatAndVersion) {
  const auto d = data();
  LearnerSpec s;
  s.n_trees = 3;
  auto j = to_json(fit(s, d.X, d.y));
  auto bad = j;
  bad["version"] = kModelFormatVersion + 1;
  try {
    model_from_json(bad);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  bad = j;
  bad["format"] = "something-else";
  EXPECT_THROW(model_from_json(bad), InvalidArgument);
  bad = j;
  bad["type"] = "mystery";
  EXPECT_THROW(model_from_json(bad), InvalidArgument);
}

TEST(ModelIo, RejectsCorruptTrees) {
  const auto d = data();
  LearnerSpec s;
  s.n_trees = 2;
  s.max_depth = 2;
  auto j = to_json(fit(s, d.X, d.y));
  auto bad = j;
  bad["n_features"] = 0;
  EXPECT_THROW(model_from_json(bad), InvalidArgument);
}
