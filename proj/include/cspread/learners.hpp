// The seven regression learners (RF, AdaBoost.R2, XGBoost-style boosting,
// GBDT, LASSO, Ridge, Elastic Net) plus RF and softmax-boosting classifiers.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cspread/core.hpp"
#include "cspread/tree.hpp"

namespace cspread {

enum class LearnerKind { RF, AdaBoost, XGB, GBDT, Lasso, Ridge, ENet, OLS };

inline std::string to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::RF: return "rf";
    case LearnerKind::AdaBoost: return "adaboost";
    case LearnerKind::XGB: return "xgb";
    case LearnerKind::GBDT: return "gbdt";
    case LearnerKind::Lasso: return "lasso";
    case LearnerKind::Ridge: return "ridge";
    case LearnerKind::ENet: return "enet";
    case LearnerKind::OLS: return "ols";
  }
  return "?";
}

inline LearnerKind parse_learner(const std::string& s) {
  for (auto k : {LearnerKind::RF, LearnerKind::AdaBoost, LearnerKind::XGB, LearnerKind::GBDT, LearnerKind::Lasso,
                 LearnerKind::Ridge, LearnerKind::ENet, LearnerKind::OLS})
    if (to_string(k) == s) return k;
  if (s == "xgboost") return LearnerKind::XGB;
  throw InvalidArgument("unknown learner '" + s + "' (expected rf|adaboost|xgb|gbdt|lasso|ridge|enet)");
}

// The seven learners in the order they are reported.
inline const std::vector<LearnerKind>& standard_learners() {
  static const std::vector<LearnerKind> v = {LearnerKind::RF,    LearnerKind::AdaBoost, LearnerKind::XGB,
                                             LearnerKind::GBDT,  LearnerKind::Lasso,    LearnerKind::Ridge,
                                             LearnerKind::ENet};
  return v;
}

inline bool is_tree_kind(LearnerKind k) {
  return k == LearnerKind::RF || k == LearnerKind::AdaBoost || k == LearnerKind::XGB || k == LearnerKind::GBDT;
}

// Flat hyperparameter record; each kind reads the fields it uses.
struct LearnerSpec {
  LearnerKind kind = LearnerKind::RF;
  int n_trees = 100;            // RF trees, boosting stages, AdaBoost rounds
  int max_depth = -1;           // -1: unlimited
  double learning_rate = 0.1;   // GBDT / XGB
  double lambda = 1.0;          // XGB L2 on leaves; linear penalty strength
  double alpha = 0.0;           // XGB L1 on leaves; ENet mixing (1 = LASSO)
  double gamma = 0.0;           // XGB minimum split gain
  double min_leaf = 1.0;        // minimum child weight
  int max_features = 0;         // 0: learner default (ceil(m/3) for RF, m otherwise)
  bool bootstrap = true;        // RF
  std::uint64_t seed = 0;

  // Count-like parameter that staged prediction can truncate.
  int count() const { return n_trees; }
};

inline std::string describe(const LearnerSpec& s) {
  std::string out = to_string(s.kind);
  auto add = [&](const std::string& k, const std::string& v) { out += " " + k + "=" + v; };
  switch (s.kind) {
    case LearnerKind::RF:
      add("trees", std::to_string(s.n_trees));
      add("depth", s.max_depth < 0 ? "inf" : std::to_string(s.max_depth));
      break;
    case LearnerKind::AdaBoost:
      add("rounds", std::to_string(s.n_trees));
      add("depth", std::to_string(s.max_depth));
      break;
    case LearnerKind::GBDT:
    case LearnerKind::XGB:
      add("trees", std::to_string(s.n_trees));
      add("lr", format_double(s.learning_rate));
      add("depth", s.max_depth < 0 ? "inf" : std::to_string(s.max_depth));
      if (s.kind == LearnerKind::XGB) {
        add("lambda", format_double(s.lambda));
        add("alpha", format_double(s.alpha));
        add("gamma", format_double(s.gamma));
      }
      break;
    case LearnerKind::ENet:
      add("lambda", format_double(s.lambda));
      add("alpha", format_double(s.alpha));
      break;
    case LearnerKind::Lasso:
    case LearnerKind::Ridge:
      add("lambda", format_double(s.lambda));
      break;
    case LearnerKind::OLS: break;
  }
  return out;
}

inline void validate(const LearnerSpec& s) {
  std::vector<std::string> errs;
  if (is_tree_kind(s.kind) && s.n_trees < 1) errs.push_back("n_trees/rounds must be >= 1");
  if ((s.kind == LearnerKind::GBDT || s.kind == LearnerKind::XGB) && !(s.learning_rate > 0 && s.learning_rate <= 1))
    errs.push_back("learning_rate must lie in (0, 1]");
  if (s.kind == LearnerKind::XGB && (s.lambda < 0 || s.alpha < 0 || s.gamma < 0))
    errs.push_back("lambda, alpha, gamma must be >= 0");
  if ((s.kind == LearnerKind::Lasso || s.kind == LearnerKind::Ridge || s.kind == LearnerKind::ENet) && s.lambda < 0)
    errs.push_back("lambda must be >= 0");
  if (s.kind == LearnerKind::ENet && !(s.alpha >= 0 && s.alpha <= 1)) errs.push_back("ENet alpha must lie in [0, 1]");
  if (s.kind == LearnerKind::AdaBoost && s.max_depth < 0) errs.push_back("AdaBoost base_depth must be >= 0");
  if (s.min_leaf < 0) errs.push_back("min_leaf must be >= 0");
  if (s.max_features < 0) errs.push_back("max_features must be >= 0");
  if (!errs.empty()) {
    std::string msg = "invalid learner spec (" + describe(s) + "):";
    for (const auto& e : errs) msg += " " + e + ";";
    throw InvalidArgument(msg);
  }
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

struct EnsembleModel {
  LearnerKind kind = LearnerKind::RF;
  std::vector<Tree> trees;
  std::vector<double> weights;  // per tree
  double base_score = 0.0;
  LearnerSpec spec;
  std::size_t n_features = 0;
  int n_classes = 0;  // > 0 for classifiers
  // Softmax boosting: trees are laid out stage-major, tree t belongs to class t % n_classes.
  bool softmax = false;

  std::size_t stages() const { return softmax ? trees.size() / static_cast<std::size_t>(n_classes) : trees.size(); }
};

struct LinearModel {
  LearnerKind kind = LearnerKind::Ridge;
  double intercept = 0.0;
  std::vector<double> coefficients;
  double lambda = 0.0;
  double alpha = 0.0;
  int sweeps = 0;
  LearnerSpec spec;
};

using Model = std::variant<EnsembleModel, LinearModel>;

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, LinearModel last) : Error(what), last_iterate(std::move(last)) {}
  LinearModel last_iterate;
};

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

inline void check_width(std::size_t expected, const Matrix& X) {
  if (!X.empty() && X.cols() != expected)
    throw InvalidArgument("predict: model expects " + std::to_string(expected) + " features, got " +
                          std::to_string(X.cols()));
}

// Predictions of the first k stages for every k in `counts` (each <= stages()).
// For RF and AdaBoost the truncated ensemble is renormalized, so the result
// equals a fresh fit with k trees/rounds.
inline std::vector<std::vector<double>> staged_predict(const EnsembleModel& m, const Matrix& X,
                                                       std::vector<std::size_t> counts) {
  check_width(m.n_features, X);
  if (m.n_classes > 0) throw InvalidArgument("staged_predict: regression models only");
  std::vector<std::vector<double>> out(counts.size(), std::vector<double>(X.rows()));
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return counts[a] < counts[b]; });
  const bool averaged = m.kind == LearnerKind::RF || m.kind == LearnerKind::AdaBoost;
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto x = X.row(r);
    double acc = 0.0, wsum = 0.0;
    std::size_t t = 0;
    for (auto o : order) {
      const std::size_t k = std::min(counts[o], m.trees.size());
      for (; t < k; ++t) {
        acc += m.weights[t] * m.trees[t].predict(x);
        wsum += m.weights[t];
      }
      out[o][r] = averaged ? (wsum > 0 ? acc / wsum : 0.0) : m.base_score + acc;
    }
  }
  return out;
}

inline std::vector<double> predict(const EnsembleModel& m, const Matrix& X) {
  check_width(m.n_features, X);
  if (m.n_classes > 0) throw InvalidArgument("predict: use predict_class / predict_scores for classifiers");
  std::vector<double> out(X.rows());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto x = X.row(r);
    double acc = m.base_score;
    for (std::size_t t = 0; t < m.trees.size(); ++t) acc += m.weights[t] * m.trees[t].predict(x);
    out[r] = acc;
  }
  return out;
}

inline std::vector<double> predict(const LinearModel& m, const Matrix& X) {
  check_width(m.coefficients.size(), X);
  std::vector<double> out(X.rows());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    double acc = m.intercept;
    for (std::size_t j = 0; j < m.coefficients.size(); ++j) {
      const double v = X(r, j);
      if (!is_missing(v)) acc += m.coefficients[j] * v;
    }
    out[r] = acc;
  }
  return out;
}

inline std::vector<double> predict(const Model& m, const Matrix& X) {
  return std::visit([&](const auto& mm) { return predict(mm, X); }, m);
}

// Per-class scores: averaged leaf class frequencies (RF) or raw softmax margins (boosting).
inline std::vector<double> class_scores(const EnsembleModel& m, std::span<const double> x) {
  std::vector<double> s(static_cast<std::size_t>(m.n_classes), 0.0);
  if (m.softmax) {
    for (std::size_t t = 0; t < m.trees.size(); ++t)
      s[t % static_cast<std::size_t>(m.n_classes)] += m.weights[t] * m.trees[t].predict(x);
    for (auto& v : s) v += m.base_score;
  } else {
    for (std::size_t t = 0; t < m.trees.size(); ++t) {
      const auto& leaf = m.trees[t].nodes[static_cast<std::size_t>(m.trees[t].leaf_index(x))];
      for (int k = 0; k < m.n_classes; ++k) s[k] += m.weights[t] * leaf.dist[k];
    }
  }
  return s;
}

inline std::vector<int> predict_class(const EnsembleModel& m, const Matrix& X) {
  check_width(m.n_features, X);
  if (m.n_classes <= 0) throw InvalidArgument("predict_class: not a classifier");
  std::vector<int> out(X.rows());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto s = class_scores(m, X.row(r));
    out[r] = static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

inline int resolve_max_features(const LearnerSpec& s, std::size_t m) {
  if (s.max_features > 0) {
    if (static_cast<std::size_t>(s.max_features) > m)
      throw InvalidArgument("max_features q must satisfy 1 <= q <= " + std::to_string(m));
    return s.max_features;
  }
  if (s.kind == LearnerKind::RF) return static_cast<int>(std::max<std::size_t>(1, (m + 2) / 3));
  return static_cast<int>(m);
}

namespace detail {

// Bootstrap multiplicities for tree t, drawn from stream (seed, t).
inline std::vector<double> bootstrap_weights(std::size_t n, std::uint64_t seed, std::size_t t) {
  Rng rng = Rng::stream(seed, t);
  std::vector<double> w(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) w[rng.below(n)] += 1.0;
  return w;
}

inline EnsembleModel fit_forest(const Matrix& X, std::span<const double> y, const LearnerSpec& spec, int n_classes) {
  validate(spec);
  if (X.rows() != y.size() || y.empty()) throw InvalidArgument("fit_rf: |X| must equal |y| > 0");
  const TrainingData data(X);
  TreeParams tp;
  tp.max_depth = spec.max_depth;
  tp.min_leaf = spec.min_leaf;
  tp.max_features = resolve_max_features(spec, X.cols());
  if (static_cast<std::size_t>(tp.max_features) == X.cols()) tp.max_features = -1;
  tp.criterion = n_classes > 0 ? SplitCriterion::Gini : SplitCriterion::Variance;
  tp.n_classes = n_classes;

  EnsembleModel m;
  m.kind = LearnerKind::RF;
  m.spec = spec;
  m.n_features = X.cols();
  m.n_classes = n_classes;
  const auto B = static_cast<std::size_t>(spec.n_trees);
  m.trees.reserve(B);
  for (std::size_t t = 0; t < B; ++t) {
    const auto w = spec.bootstrap ? bootstrap_weights(y.size(), spec.seed, 2 * t) : std::vector<double>(y.size(), 1.0);
    Rng split_rng = Rng::stream(spec.seed, 2 * t + 1);
    m.trees.push_back(fit_tree(data, y, w, tp, &split_rng));
  }
  m.weights.assign(B, 1.0 / static_cast<double>(B));
  return m;
}

}  // namespace detail

inline EnsembleModel fit_rf(const Matrix& X, std::span<const double> y, const LearnerSpec& spec) {
  return detail::fit_forest(X, y, spec, 0);
}

// Classification forest: y holds class indices in [0, n_classes).
inline EnsembleModel fit_rf_classifier(const Matrix& X, std::span<const double> y, const LearnerSpec& spec,
                                       int n_classes) {
  if (n_classes < 1) throw InvalidArgument("fit_rf_classifier: n_classes must be >= 1");
  return detail::fit_forest(X, y, spec, n_classes);
}

// ---------------------------------------------------------------------------
// Gradient boosting (first order, squared loss) and second-order boosting
// ---------------------------------------------------------------------------

inline EnsembleModel fit_gbdt(const Matrix& X, std::span<const double> y, const LearnerSpec& spec) {
  validate(spec);
  if (X.rows() != y.size() || y.empty()) throw InvalidArgument("fit_gbdt: |X| must equal |y| > 0");
  const TrainingData data(X);
  TreeParams tp;
  tp.max_depth = spec.max_depth;
  tp.min_leaf = spec.min_leaf;
  tp.max_features = spec.max_features > 0 ? resolve_max_features(spec, X.cols()) : -1;
  Rng rng = Rng::stream(spec.seed, 0);

  EnsembleModel m;
  m.kind = LearnerKind::GBDT;
  m.spec = spec;
  m.n_features = X.cols();
  m.base_score = mean(y);
  const std::vector<double> ones(y.size(), 1.0);
  std::vector<double> pred(y.size(), m.base_score), resid(y.size());
  for (int s = 0; s < spec.n_trees; ++s) {
    for (std::size_t i = 0; i < y.size(); ++i) resid[i] = y[i] - pred[i];
    Tree tree = fit_tree(data, resid, ones, tp, &rng);
    for (std::size_t i = 0; i < y.size(); ++i) pred[i] += spec.learning_rate * tree.predict(X.row(i));
    m.trees.push_back(std::move(tree));
    m.weights.push_back(spec.learning_rate);
  }
  return m;
}

inline EnsembleModel fit_xgb(const Matrix& X, std::span<const double> y, const LearnerSpec& spec) {
  validate(spec);
  if (X.rows() != y.size() || y.empty()) throw InvalidArgument("fit_xgb: |X| must equal |y| > 0");
  const TrainingData data(X);
  TreeParams tp;
  tp.max_depth = spec.max_depth;
  tp.min_leaf = spec.min_leaf;
  tp.max_features = spec.max_features > 0 ? resolve_max_features(spec, X.cols()) : -1;
  Rng rng = Rng::stream(spec.seed, 0);

  EnsembleModel m;
  m.kind = LearnerKind::XGB;
  m.spec = spec;
  m.n_features = X.cols();
  m.base_score = mean(y);
  const std::vector<double> ones(y.size(), 1.0);
  std::vector<double> pred(y.size(), m.base_score), grad(y.size());
  for (int s = 0; s < spec.n_trees; ++s) {
    for (std::size_t i = 0; i < y.size(); ++i) grad[i] = pred[i] - y[i];
    GradientCriterion crit{grad, ones, ones, spec.lambda, spec.alpha, spec.gamma};
    Tree tree = build_tree(data, crit, tp, ones, &rng);
    for (std::size_t i = 0; i < y.size(); ++i) pred[i] += spec.learning_rate * tree.predict(X.row(i));
    m.trees.push_back(std::move(tree));
    m.weights.push_back(spec.learning_rate);
  }
  return m;
}

// Multi-class softmax boosting: one tree per class per stage, gradients
// p_k - 1[y = k] and hessians p_k (1 - p_k).
inline EnsembleModel fit_xgb_classifier(const Matrix& X, std::span<const double> y, const LearnerSpec& spec,
                                        int n_classes) {
  validate(spec);
  if (X.rows() != y.size() || y.empty()) throw InvalidArgument("fit_xgb_classifier: |X| must equal |y| > 0");
  if (n_classes < 2) throw InvalidArgument("fit_xgb_classifier: n_classes must be >= 2");
  const TrainingData data(X);
  TreeParams tp;
  tp.max_depth = spec.max_depth;
  tp.min_leaf = spec.min_leaf;
  tp.max_features = spec.max_features > 0 ? resolve_max_features(spec, X.cols()) : -1;
  Rng rng = Rng::stream(spec.seed, 0);

  EnsembleModel m;
  m.kind = LearnerKind::XGB;
  m.spec = spec;
  m.n_features = X.cols();
  m.n_classes = n_classes;
  m.softmax = true;
  const std::size_t n = y.size(), K = static_cast<std::size_t>(n_classes);
  const std::vector<double> ones(n, 1.0);
  std::vector<double> margin(n * K, 0.0), grad(n), hess(n), prob(n * K);
  for (int s = 0; s < spec.n_trees; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      double mx = margin[i * K];
      for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, margin[i * K + k]);
      double z = 0.0;
      for (std::size_t k = 0; k < K; ++k) z += (prob[i * K + k] = std::exp(margin[i * K + k] - mx));
      for (std::size_t k = 0; k < K; ++k) prob[i * K + k] /= z;
    }
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = prob[i * K + k];
        grad[i] = p - (static_cast<std::size_t>(y[i]) == k ? 1.0 : 0.0);
        hess[i] = std::max(p * (1.0 - p), 1e-16);
      }
      GradientCriterion crit{grad, hess, ones, spec.lambda, spec.alpha, spec.gamma};
      Tree tree = build_tree(data, crit, tp, ones, &rng);
      for (std::size_t i = 0; i < n; ++i) margin[i * K + k] += spec.learning_rate * tree.predict(X.row(i));
      m.trees.push_back(std::move(tree));
      m.weights.push_back(spec.learning_rate);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// AdaBoost.R2 with exponential loss
// ---------------------------------------------------------------------------

struct AdaBoostTrace {
  std::vector<std::vector<double>> sample_weights;  // weights used to fit each round
  std::vector<double> avg_loss;                     // weighted loss per kept round
};

inline EnsembleModel fit_adaboost(const Matrix& X, std::span<const double> y, const LearnerSpec& spec,
                                  AdaBoostTrace* trace = nullptr) {
  validate(spec);
  if (X.rows() != y.size() || y.empty()) throw InvalidArgument("fit_adaboost: |X| must equal |y| > 0");
  const TrainingData data(X);
  const std::size_t n = y.size();
  TreeParams tp;
  tp.max_depth = spec.max_depth;
  tp.min_leaf = 0.0;
  tp.max_features = spec.max_features > 0 ? resolve_max_features(spec, X.cols()) : -1;
  Rng rng = Rng::stream(spec.seed, 0);
  constexpr double kMinBeta = 1e-10;

  EnsembleModel m;
  m.kind = LearnerKind::AdaBoost;
  m.spec = spec;
  m.n_features = X.cols();
  std::vector<double> w(n, 1.0 / static_cast<double>(n)), pred(n), loss(n);
  std::vector<double> raw;
  for (int round = 0; round < spec.n_trees; ++round) {
    Tree tree = fit_tree(data, y, w, tp, &rng);
    double max_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = tree.predict(X.row(i));
      max_err = std::max(max_err, std::abs(pred[i] - y[i]));
    }
    if (trace) trace->sample_weights.push_back(w);
    if (max_err == 0.0) {
      // Perfect round: beta floors at kMinBeta and boosting stops.
      m.trees.push_back(std::move(tree));
      raw.push_back(std::log(1.0 / kMinBeta));
      if (trace) trace->avg_loss.push_back(0.0);
      break;
    }
    double avg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      loss[i] = 1.0 - std::exp(-std::abs(pred[i] - y[i]) / max_err);
      avg += w[i] * loss[i];
    }
    if (avg >= 0.5) {
      if (m.trees.empty()) {  // keep a lone first round so the model is never empty
        m.trees.push_back(std::move(tree));
        raw.push_back(1.0);
        if (trace) trace->avg_loss.push_back(avg);
      } else if (trace) {
        trace->sample_weights.pop_back();
      }
      break;
    }
    const double beta = std::max(avg / (1.0 - avg), kMinBeta);
    m.trees.push_back(std::move(tree));
    raw.push_back(std::log(1.0 / beta));
    if (trace) trace->avg_loss.push_back(avg);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += (w[i] *= std::pow(beta, 1.0 - loss[i]));
    for (auto& v : w) v /= z;
  }
  const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
  for (double r : raw) m.weights.push_back(r / total);
  return m;
}

// ---------------------------------------------------------------------------
// Penalized linear regression
//
// Objective: (1/2n) ||y - b0 - X b||^2 + lambda [alpha ||b||_1 + (1 - alpha)/2 ||b||_2^2]
// Ridge (alpha = 0) and OLS are solved from the normal equations; LASSO and
// ENet by cyclic coordinate descent. Missing inputs are imputed as 0.
// ---------------------------------------------------------------------------

struct LinearFitOptions {
  bool fit_intercept = true;
  double tolerance = 1e-7;
  int max_sweeps = 10000;
};

namespace detail {

inline double enet_objective(const std::vector<std::vector<double>>& cols, std::span<const double> yc,
                             std::span<const double> beta, double lambda, double alpha) {
  const std::size_t n = yc.size();
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = yc[i];
    for (std::size_t j = 0; j < beta.size(); ++j) r -= cols[j][i] * beta[j];
    rss += r * r;
  }
  double l1 = 0.0, l2 = 0.0;
  for (double b : beta) {
    l1 += std::abs(b);
    l2 += b * b;
  }
  return rss / (2.0 * static_cast<double>(n)) + lambda * (alpha * l1 + 0.5 * (1.0 - alpha) * l2);
}

}  // namespace detail

inline LinearModel fit_linear(const Matrix& X, std::span<const double> y, const LearnerSpec& spec,
                              const LinearFitOptions& opt = {}) {
  validate(spec);
  if (X.rows() != y.size() || y.empty()) throw InvalidArgument("fit_linear: |X| must equal |y| > 0");
  const std::size_t n = X.rows(), p = X.cols();
  const double nd = static_cast<double>(n);

  LinearModel m;
  m.kind = spec.kind;
  m.spec = spec;
  m.lambda = spec.kind == LearnerKind::OLS ? 0.0 : spec.lambda;
  m.alpha = spec.kind == LearnerKind::Lasso ? 1.0 : spec.kind == LearnerKind::ENet ? spec.alpha : 0.0;
  m.coefficients.assign(p, 0.0);

  std::vector<std::vector<double>> cols(p, std::vector<double>(n));
  std::vector<double> xmean(p, 0.0), yc(y.begin(), y.end());
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t i = 0; i < n; ++i) cols[j][i] = is_missing(X(i, j)) ? 0.0 : X(i, j);
  double ymean = 0.0;
  if (opt.fit_intercept) {
    ymean = mean(y);
    for (auto& v : yc) v -= ymean;
    for (std::size_t j = 0; j < p; ++j) {
      xmean[j] = mean(cols[j]);
      for (auto& v : cols[j]) v -= xmean[j];
    }
  }

  if (m.alpha == 0.0) {
    Eigen::MatrixXd G(p, p);
    Eigen::VectorXd rhs(p);
    for (std::size_t a = 0; a < p; ++a) {
      rhs(a) = std::inner_product(cols[a].begin(), cols[a].end(), yc.begin(), 0.0) / nd;
      for (std::size_t b = a; b < p; ++b)
        G(a, b) = G(b, a) = std::inner_product(cols[a].begin(), cols[a].end(), cols[b].begin(), 0.0) / nd;
      G(a, a) += m.lambda;
    }
    Eigen::VectorXd beta = G.ldlt().solve(rhs);
    for (std::size_t j = 0; j < p; ++j) m.coefficients[j] = std::isfinite(beta(j)) ? beta(j) : 0.0;
  } else {
    std::vector<double> c(p), resid = yc;
    for (std::size_t j = 0; j < p; ++j)
      c[j] = std::inner_product(cols[j].begin(), cols[j].end(), cols[j].begin(), 0.0) / nd;
    const double l1 = m.lambda * m.alpha, l2 = m.lambda * (1.0 - m.alpha);
    auto& beta = m.coefficients;
    bool converged = false;
#ifndef NDEBUG
    double prev_obj = detail::enet_objective(cols, yc, beta, m.lambda, m.alpha);
#endif
    for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
      double max_delta = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        const double denom = c[j] + l2;
        if (denom <= 0.0) continue;
        const double rho = std::inner_product(cols[j].begin(), cols[j].end(), resid.begin(), 0.0) / nd + c[j] * beta[j];
        const double updated = soft_threshold(rho, l1) / denom;
        const double delta = updated - beta[j];
        if (delta != 0.0) {
          for (std::size_t i = 0; i < n; ++i) resid[i] -= delta * cols[j][i];
          beta[j] = updated;
          max_delta = std::max(max_delta, std::abs(delta));
        }
      }
      m.sweeps = sweep;
#ifndef NDEBUG
      const double obj = detail::enet_objective(cols, yc, beta, m.lambda, m.alpha);
      assert(obj <= prev_obj + 1e-10 * std::max(1.0, std::abs(prev_obj)));
      prev_obj = obj;
#endif
      if (max_delta < opt.tolerance) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      m.intercept = ymean - std::inner_product(xmean.begin(), xmean.end(), beta.begin(), 0.0);
      throw ConvergenceError("coordinate descent did not converge in " + std::to_string(opt.max_sweeps) + " sweeps",
                             m);
    }
  }
  m.intercept = opt.fit_intercept ? ymean - std::inner_product(xmean.begin(), xmean.end(), m.coefficients.begin(), 0.0)
                                  : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

inline Model fit(const LearnerSpec& spec, const Matrix& X, std::span<const double> y) {
  switch (spec.kind) {
    case LearnerKind::RF: return fit_rf(X, y, spec);
    case LearnerKind::AdaBoost: return fit_adaboost(X, y, spec);
    case LearnerKind::XGB: return fit_xgb(X, y, spec);
    case LearnerKind::GBDT: return fit_gbdt(X, y, spec);
    default: return fit_linear(X, y, spec);
  }
}

}  // namespace cspread
