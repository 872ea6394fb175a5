// Exact SHAP attribution: path-dependent TreeSHAP for tree ensembles, the
// closed form for linear models, and monthly/full-sample importance reports.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cspread/learners.hpp"
#include "cspread/panel.hpp"

namespace cspread {

struct ShapVector {
  double base_value = 0.0;
  std::vector<double> contributions;
  double prediction = 0.0;
};

namespace detail {

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

inline void extend_path(PathElement* path, int depth, double zero, double one, int feature) {
  path[depth] = {feature, zero, one, depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].pweight += one * path[i].pweight * (i + 1) / static_cast<double>(depth + 1);
    path[i].pweight = zero * path[i].pweight * (depth - i) / static_cast<double>(depth + 1);
  }
}

inline void unwind_path(PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction, zero = path[index].zero_fraction;
  double next = path[depth].pweight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next * (depth + 1) / ((i + 1) * one);
      next = tmp - path[i].pweight * zero * (depth - i) / static_cast<double>(depth + 1);
    } else {
      path[i].pweight = path[i].pweight * (depth + 1) / (zero * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

inline double unwound_path_sum(const PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction, zero = path[index].zero_fraction;
  double next = path[depth].pweight, total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = next * (depth + 1) / ((i + 1) * one);
      total += tmp;
      next = path[i].pweight - tmp * zero * (depth - i) / static_cast<double>(depth + 1);
    } else {
      total += path[i].pweight / zero / ((depth - i) / static_cast<double>(depth + 1));
    }
  }
  return total;
}

class TreeShapWalker {
 public:
  TreeShapWalker(const Tree& tree, std::span<const double> x, const std::function<double(const TreeNode&)>& leaf_value,
                 double scale, std::span<double> phi)
      : tree_(tree), x_(x), leaf_value_(leaf_value), scale_(scale), phi_(phi) {
    const auto d = static_cast<std::size_t>(tree.depth()) + 3;
    buffer_.resize(d * (d + 1) / 2 + d);
  }

  // The root segment starts at buffer_[1]; slot 0 is scratch for the first copy.
  void run() { recurse(0, buffer_.data(), 0, 1.0, 1.0, -1); }

 private:
  void recurse(int node_id, PathElement* parent_path, int depth, double zero, double one, int feature) {
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    extend_path(path, depth, zero, one, feature);
    const TreeNode& node = tree_.nodes[static_cast<std::size_t>(node_id)];
    if (node.is_leaf()) {
      const double v = leaf_value_(node) * scale_;
      for (int i = 1; i <= depth; ++i) {
        const double w = unwound_path_sum(path, depth, i);
        phi_[static_cast<std::size_t>(path[i].feature)] += w * (path[i].one_fraction - path[i].zero_fraction) * v;
      }
      return;
    }
    const bool left = tree_.goes_left(node, x_);
    const int hot = left ? node.left : node.right;
    const int cold = left ? node.right : node.left;
    double incoming_zero = 1.0, incoming_one = 1.0;
    int k = 1;
    for (; k <= depth; ++k)
      if (path[k].feature == node.feature) break;
    if (k <= depth) {
      incoming_zero = path[k].zero_fraction;
      incoming_one = path[k].one_fraction;
      unwind_path(path, depth, k);
      --depth;
    }
    const double c = node.cover;
    const double hot_zero = tree_.nodes[static_cast<std::size_t>(hot)].cover / c;
    const double cold_zero = tree_.nodes[static_cast<std::size_t>(cold)].cover / c;
    recurse(hot, path, depth + 1, hot_zero * incoming_zero, incoming_one, node.feature);
    recurse(cold, path, depth + 1, cold_zero * incoming_zero, 0.0, node.feature);
  }

  const Tree& tree_;
  std::span<const double> x_;
  const std::function<double(const TreeNode&)>& leaf_value_;
  double scale_;
  std::span<double> phi_;
  std::vector<PathElement> buffer_;
};

inline double expected_value(const Tree& t, int id, const std::function<double(const TreeNode&)>& leaf_value) {
  const auto& n = t.nodes[static_cast<std::size_t>(id)];
  if (n.is_leaf()) return leaf_value(n);
  const auto& l = t.nodes[static_cast<std::size_t>(n.left)];
  const auto& r = t.nodes[static_cast<std::size_t>(n.right)];
  return (l.cover * expected_value(t, n.left, leaf_value) + r.cover * expected_value(t, n.right, leaf_value)) / n.cover;
}

inline void check_covers(const Tree& t) {
  for (const auto& n : t.nodes)
    if (!(n.cover > 0)) throw InvalidArgument("tree_shap: model lacks positive cover counts");
}

}  // namespace detail

// SHAP values of a single tree's leaf_value output, added to phi (scaled).
// Returns the tree's expected value (empty-coalition output).
inline double tree_shap_accumulate(const Tree& tree, std::span<const double> x,
                                   const std::function<double(const TreeNode&)>& leaf_value, double scale,
                                   std::span<double> phi) {
  detail::check_covers(tree);
  detail::TreeShapWalker(tree, x, leaf_value, scale, phi).run();
  return scale * detail::expected_value(tree, 0, leaf_value);
}

inline ShapVector tree_shap(const Tree& tree, std::span<const double> x) {
  ShapVector s;
  s.contributions.assign(x.size(), 0.0);
  const std::function<double(const TreeNode&)> value = [](const TreeNode& n) { return n.value; };
  s.base_value = tree_shap_accumulate(tree, x, value, 1.0, s.contributions);
  s.prediction = tree.predict(x);
  return s;
}

// Regression ensembles explain the prediction; classifiers explain the score
// (summed leaf frequency or softmax margin) of class `output`.
inline ShapVector tree_shap(const EnsembleModel& m, std::span<const double> x, int output = 0) {
  if (x.size() != m.n_features) throw InvalidArgument("tree_shap: feature count mismatch");
  if (m.n_classes > 0 && (output < 0 || output >= m.n_classes))
    throw InvalidArgument("tree_shap: class output out of range");
  ShapVector s;
  s.contributions.assign(x.size(), 0.0);
  const bool averaged = m.n_classes == 0 && (m.kind == LearnerKind::RF || m.kind == LearnerKind::AdaBoost);
  double wsum = 0.0;
  for (double w : m.weights) wsum += w;
  const double norm = averaged && wsum > 0 ? 1.0 / wsum : 1.0;

  const std::function<double(const TreeNode&)> value = [](const TreeNode& n) { return n.value; };
  const auto k = static_cast<std::size_t>(output);
  const std::function<double(const TreeNode&)> frequency = [k](const TreeNode& n) { return n.dist[k]; };
  const auto& leaf_value = (m.n_classes > 0 && !m.softmax) ? frequency : value;

  double base = m.n_classes == 0 || m.softmax ? m.base_score : 0.0;
  double pred = base;
  for (std::size_t t = 0; t < m.trees.size(); ++t) {
    if (m.softmax && t % static_cast<std::size_t>(m.n_classes) != k) continue;
    const double w = m.weights[t] * norm;
    base += tree_shap_accumulate(m.trees[t], x, leaf_value, w, s.contributions);
    pred += w * leaf_value(m.trees[t].nodes[static_cast<std::size_t>(m.trees[t].leaf_index(x))]);
  }
  s.base_value = base;
  s.prediction = pred;
  return s;
}

inline ShapVector linear_shap(const LinearModel& m, std::span<const double> x, std::span<const double> background) {
  const std::size_t p = m.coefficients.size();
  if (x.size() != p || background.size() != p) throw InvalidArgument("linear_shap: dimension mismatch");
  ShapVector s;
  s.contributions.resize(p);
  s.base_value = m.intercept;
  s.prediction = m.intercept;
  for (std::size_t j = 0; j < p; ++j) {
    const double xj = is_missing(x[j]) ? 0.0 : x[j];
    const double bj = is_missing(background[j]) ? 0.0 : background[j];
    s.base_value += m.coefficients[j] * bj;
    s.contributions[j] = m.coefficients[j] * (xj - bj);
    s.prediction += m.coefficients[j] * xj;
  }
  return s;
}

// Column means with missing treated as 0, matching linear prediction.
inline std::vector<double> background_means(const Matrix& X) {
  std::vector<double> mu(X.cols(), 0.0);
  if (X.rows() == 0) return mu;
  for (std::size_t r = 0; r < X.rows(); ++r)
    for (std::size_t j = 0; j < X.cols(); ++j)
      if (!is_missing(X(r, j))) mu[j] += X(r, j);
  for (auto& v : mu) v /= static_cast<double>(X.rows());
  return mu;
}

inline ShapVector shap(const Model& model, std::span<const double> x, std::span<const double> background) {
  if (const auto* e = std::get_if<EnsembleModel>(&model)) return tree_shap(*e, x);
  return linear_shap(std::get<LinearModel>(model), x, background);
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct MonthShap {
  Month month;
  std::vector<ShapVector> rows;
};

struct FeatureImportance {
  std::string name;
  std::string id;
  FeatureGroup group = FeatureGroup::F;
  std::vector<double> monthly_mean;      // aligned with ImportanceReport::months
  std::vector<double> monthly_mean_abs;
  double mean = 0.0;       // full-sample mean of monthly means
  double mean_abs = 0.0;   // full-sample mean of monthly mean |SHAP|
  int rank = 0;            // 1 = most important
};

struct ImportanceReport {
  std::vector<Month> months;
  std::vector<FeatureImportance> features;  // in column order
  std::map<FeatureGroup, double> group_mean_abs;

  // Features sorted by rank.
  std::vector<const FeatureImportance*> ranked() const {
    std::vector<const FeatureImportance*> out;
    for (const auto& f : features) out.push_back(&f);
    std::sort(out.begin(), out.end(), [](auto a, auto b) { return a->rank < b->rank; });
    return out;
  }
};

inline ImportanceReport aggregate_importance(const std::vector<MonthShap>& months,
                                             const std::vector<FeatureEntry>& columns) {
  ImportanceReport rep;
  rep.features.resize(columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    rep.features[j].name = columns[j].name;
    rep.features[j].id = columns[j].id;
    rep.features[j].group = columns[j].group;
  }
  for (const auto& ms : months) {
    if (ms.rows.empty()) continue;
    rep.months.push_back(ms.month);
    const double n = static_cast<double>(ms.rows.size());
    for (std::size_t j = 0; j < columns.size(); ++j) {
      double s = 0.0, a = 0.0;
      for (const auto& r : ms.rows) {
        if (r.contributions.size() != columns.size())
          throw InvalidArgument("aggregate_importance: SHAP vector width does not match the feature list");
        s += r.contributions[j];
        a += std::abs(r.contributions[j]);
      }
      rep.features[j].monthly_mean.push_back(s / n);
      rep.features[j].monthly_mean_abs.push_back(a / n);
    }
  }
  for (auto& f : rep.features) {
    if (!f.monthly_mean.empty()) {
      f.mean = mean(f.monthly_mean);
      f.mean_abs = mean(f.monthly_mean_abs);
    }
    rep.group_mean_abs[f.group] += f.mean_abs;
  }
  std::vector<std::size_t> order(rep.features.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    const auto &fa = rep.features[a], &fb = rep.features[b];
    if (fa.mean_abs != fb.mean_abs) return fa.mean_abs > fb.mean_abs;
    return fa.id < fb.id;
  });
  for (std::size_t r = 0; r < order.size(); ++r) rep.features[order[r]].rank = static_cast<int>(r + 1);
  return rep;
}

}  // namespace cspread
