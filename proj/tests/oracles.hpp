// Independent reference implementations used only by tests. Each one is
// deliberately naive: exhaustive enumeration or a textbook formula.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "cspread/panel.hpp"
#include "cspread/tree.hpp"

namespace oracle {

using cspread::Matrix;

// ---------------------------------------------------------------------------
// Exhaustive CART
// ---------------------------------------------------------------------------

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

inline double sse(const std::vector<double>& y, const std::vector<std::size_t>& rows) {
  if (rows.empty()) return 0.0;
  double m = 0.0;
  for (auto r : rows) m += y[r];
  m /= static_cast<double>(rows.size());
  double s = 0.0;
  for (auto r : rows) s += (y[r] - m) * (y[r] - m);
  return s;
}

// Every (feature, midpoint) pair; ties keep the lowest feature, then threshold.
inline SplitChoice best_split(const Matrix& X, const std::vector<double>& y, const std::vector<std::size_t>& rows,
                              double min_leaf) {
  SplitChoice best;
  const double parent = sse(y, rows);
  for (std::size_t f = 0; f < X.cols(); ++f) {
    std::set<double> values;
    for (auto r : rows) values.insert(X(r, f));
    std::vector<double> v(values.begin(), values.end());
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
      const double thr = 0.5 * (v[k] + v[k + 1]);
      std::vector<std::size_t> l, rr;
      for (auto r : rows) (X(r, f) < thr ? l : rr).push_back(r);
      if (static_cast<double>(l.size()) < min_leaf || static_cast<double>(rr.size()) < min_leaf) continue;
      const double gain = parent - sse(y, l) - sse(y, rr);
      if (gain > best.gain + 1e-9 * std::max(1.0, best.gain)) best = {static_cast<int>(f), thr, gain};
    }
  }
  return best;
}

struct OracleNode {
  int feature = -1;
  double threshold = 0.0;
  double value = 0.0;
  std::unique_ptr<OracleNode> left, right;
};

inline std::unique_ptr<OracleNode> build_tree(const Matrix& X, const std::vector<double>& y,
                                              const std::vector<std::size_t>& rows, int depth, int max_depth,
                                              double min_leaf) {
  auto node = std::make_unique<OracleNode>();
  double m = 0.0;
  for (auto r : rows) m += y[r];
  node->value = m / static_cast<double>(rows.size());
  if (max_depth >= 0 && depth >= max_depth) return node;
  const auto s = best_split(X, y, rows, min_leaf);
  if (s.feature < 0 || s.gain <= 1e-9) return node;
  std::vector<std::size_t> l, r;
  for (auto i : rows) (X(i, static_cast<std::size_t>(s.feature)) < s.threshold ? l : r).push_back(i);
  node->feature = s.feature;
  node->threshold = s.threshold;
  node->left = build_tree(X, y, l, depth + 1, max_depth, min_leaf);
  node->right = build_tree(X, y, r, depth + 1, max_depth, min_leaf);
  return node;
}

// Structural equality of a library tree (from node id) and an oracle tree.
inline bool same_tree(const cspread::Tree& t, int id, const OracleNode& o, double tol = 1e-9) {
  const auto& n = t.nodes[static_cast<std::size_t>(id)];
  if (n.is_leaf() != (o.feature < 0)) return false;
  if (n.is_leaf()) return std::abs(n.value - o.value) <= tol;
  return n.feature == o.feature && std::abs(n.threshold - o.threshold) <= tol && same_tree(t, n.left, *o.left, tol) &&
         same_tree(t, n.right, *o.right, tol);
}

// ---------------------------------------------------------------------------
// Least squares by column-pivoted QR on [1, X]
// ---------------------------------------------------------------------------

struct LeastSquares {
  double intercept = 0.0;
  std::vector<double> coefficients;
};

inline LeastSquares least_squares(const Matrix& X, const std::vector<double>& y) {
  Eigen::MatrixXd A(X.rows(), X.cols() + 1);
  Eigen::VectorXd b(y.size());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    A(i, 0) = 1.0;
    for (std::size_t j = 0; j < X.cols(); ++j) A(i, j + 1) = X(i, j);
    b(i) = y[i];
  }
  const Eigen::VectorXd beta = A.colPivHouseholderQr().solve(b);
  LeastSquares out;
  out.intercept = beta(0);
  for (std::size_t j = 0; j < X.cols(); ++j) out.coefficients.push_back(beta(j + 1));
  return out;
}

// ---------------------------------------------------------------------------
// HAC variance: explicit autocovariance table and Bartlett sum
// ---------------------------------------------------------------------------

inline double hac_t(const std::vector<double>& x, int lag) {
  const double T = static_cast<double>(x.size());
  double m = 0.0;
  for (double v : x) m += v;
  m /= T;
  std::vector<double> gamma(static_cast<std::size_t>(lag) + 1, 0.0);
  for (int j = 0; j <= lag; ++j) {
    double s = 0.0;
    for (std::size_t a = 0; a < x.size(); ++a)
      for (std::size_t b = 0; b < x.size(); ++b)
        if (static_cast<int>(a) - static_cast<int>(b) == j) s += (x[a] - m) * (x[b] - m);
    gamma[static_cast<std::size_t>(j)] = s / (T - 1.0);
  }
  double var = gamma[0];
  for (int j = 1; j <= lag; ++j) var += 2.0 * (1.0 - static_cast<double>(j) / (lag + 1)) * gamma[static_cast<std::size_t>(j)];
  return m / std::sqrt(var / T);
}

// ---------------------------------------------------------------------------
// Exhaustive Shapley values with path-conditional expectations
// ---------------------------------------------------------------------------

// E[f(x) | x_S]: follow x on features in S, otherwise average children by cover.
inline double conditional_value(const cspread::Tree& t, int id, std::span<const double> x, unsigned mask,
                                const std::function<double(const cspread::TreeNode&)>& leaf) {
  const auto& n = t.nodes[static_cast<std::size_t>(id)];
  if (n.is_leaf()) return leaf(n);
  if (mask & (1u << n.feature)) return conditional_value(t, t.goes_left(n, x) ? n.left : n.right, x, mask, leaf);
  const auto& l = t.nodes[static_cast<std::size_t>(n.left)];
  const auto& r = t.nodes[static_cast<std::size_t>(n.right)];
  return (l.cover * conditional_value(t, n.left, x, mask, leaf) + r.cover * conditional_value(t, n.right, x, mask, leaf)) /
         n.cover;
}

inline std::vector<double> shapley(const cspread::Tree& t, std::span<const double> x, int n_features,
                                   const std::function<double(const cspread::TreeNode&)>& leaf) {
  std::vector<double> fact(static_cast<std::size_t>(n_features) + 1, 1.0);
  for (int i = 1; i <= n_features; ++i) fact[static_cast<std::size_t>(i)] = fact[static_cast<std::size_t>(i) - 1] * i;
  std::vector<double> phi(static_cast<std::size_t>(n_features), 0.0);
  const unsigned full = 1u << n_features;
  for (int i = 0; i < n_features; ++i)
    for (unsigned S = 0; S < full; ++S) {
      if (S & (1u << i)) continue;
      const int s = __builtin_popcount(S);
      const double w = fact[static_cast<std::size_t>(s)] * fact[static_cast<std::size_t>(n_features - s - 1)] /
                       fact[static_cast<std::size_t>(n_features)];
      phi[static_cast<std::size_t>(i)] +=
          w * (conditional_value(t, 0, x, S | (1u << i), leaf) - conditional_value(t, 0, x, S, leaf));
    }
  return phi;
}

// ---------------------------------------------------------------------------
// Classification metrics by per-sample recount
// ---------------------------------------------------------------------------

struct Recount {
  double accuracy = 0.0, recall = 0.0, precision = 0.0, f1 = 0.0;
};

inline Recount recount(const std::vector<int>& truth, const std::vector<int>& pred, int K) {
  Recount out;
  const double n = static_cast<double>(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) out.accuracy += (truth[i] == pred[i]) / n;
  for (int k = 0; k < K; ++k) {
    double tp = 0, is_k = 0, said_k = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      tp += truth[i] == k && pred[i] == k;
      is_k += truth[i] == k;
      said_k += pred[i] == k;
    }
    const double p = said_k > 0 ? tp / said_k : 0.0, r = is_k > 0 ? tp / is_k : 0.0;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    out.precision += is_k / n * p;
    out.recall += is_k / n * r;
    out.f1 += is_k / n * f;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Piecewise-linear interpolation by scanning every segment
// ---------------------------------------------------------------------------

inline double interpolate(std::vector<std::pair<double, double>> pts, double m) {
  std::sort(pts.begin(), pts.end());
  if (m <= pts.front().first) return pts.front().second;
  if (m >= pts.back().first) return pts.back().second;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const auto [x0, y0] = pts[i];
    const auto [x1, y1] = pts[i + 1];
    if (x0 <= m && m <= x1) return y0 + (y1 - y0) * (m - x0) / (x1 - x0);
  }
  return NAN;
}

// ---------------------------------------------------------------------------
// Fixture builders
// ---------------------------------------------------------------------------

// A panel whose rows come from a callback (bond index, month offset) -> row.
inline cspread::Panel make_panel(int n_bonds, int n_months, const std::vector<std::string>& features,
                                 const std::function<void(int, int, cspread::ObservationRow&)>& fill,
                                 cspread::Month start = cspread::Month::from_ym(2012, 1)) {
  cspread::Panel p;
  for (const auto& f : features) {
    auto g = cspread::infer_group(f);
    p.manifest.entries.push_back({f, g->first, g->second});
  }
  for (int b = 0; b < n_bonds; ++b)
    for (int t = 0; t < n_months; ++t) {
      cspread::ObservationRow r;
      char id[16];
      std::snprintf(id, sizeof id, "b%03d", b);
      r.bond_id = id;
      r.month = start + t;
      r.features.assign(features.size(), 0.0);
      r.industry = "IND1";
      fill(b, t, r);
      if (!r.bond_id.empty()) p.rows.push_back(r);
    }
  p.normalize();
  p.preprocessed = true;
  return p;
}

}  // namespace oracle
