// Exact greedy CART with sparse-aware default directions.
//
// One builder serves three split criteria:
//   VarianceCriterion   weighted variance reduction (regression)
//   GiniCriterion       weighted Gini decrease (classification)
//   GradientCriterion   second-order gain with L1/L2 leaf regularization
//
// Candidate thresholds are midpoints between consecutive distinct values of
// the non-missing samples in a node; x < threshold routes left. Rows whose
// split feature is missing follow the node's default direction, chosen to
// maximize gain (or toward the heavier child when the node saw no missing
// values). Ties in gain go to the lower feature index, then the lower
// threshold, then missing-left.
#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "cspread/core.hpp"

namespace cspread {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  bool default_left = true;
  int left = -1;
  int right = -1;
  double value = 0.0;        // leaf output (regression / raw score)
  double cover = 0.0;        // training weight that reached this node
  std::vector<double> dist;  // class frequencies at classification leaves

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root, preorder

  bool goes_left(const TreeNode& n, std::span<const double> x) const {
    const double v = x[static_cast<std::size_t>(n.feature)];
    return is_missing(v) ? n.default_left : v < n.threshold;
  }

  int leaf_index(std::span<const double> x) const {
    int i = 0;
    while (!nodes[i].is_leaf()) i = goes_left(nodes[i], x) ? nodes[i].left : nodes[i].right;
    return i;
  }

  double predict(std::span<const double> x) const { return nodes[leaf_index(x)].value; }

  int depth() const { return depth_from(0); }

  std::vector<int> used_features() const {
    std::vector<int> out;
    for (const auto& n : nodes)
      if (!n.is_leaf()) out.push_back(n.feature);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  int depth_from(int i) const {
    if (nodes[i].is_leaf()) return 0;
    return 1 + std::max(depth_from(nodes[i].left), depth_from(nodes[i].right));
  }
};

enum class SplitCriterion { Variance, Gini };

struct TreeParams {
  int max_depth = -1;      // -1: unlimited
  double min_leaf = 1.0;   // minimum child weight
  int max_features = -1;   // q features sampled per node; -1: all
  SplitCriterion criterion = SplitCriterion::Variance;
  int n_classes = 0;       // Gini only
};

// Column-major copy of a design matrix plus per-feature row orderings
// (ascending value, missing last), shared across every tree fit on it.
class TrainingData {
 public:
  explicit TrainingData(const Matrix& X) : n_rows_(X.rows()), columns_(to_columns(X)), sorted_(X.cols()) {
    for (std::size_t f = 0; f < columns_.size(); ++f) {
      auto& order = sorted_[f];
      order.resize(n_rows_);
      std::iota(order.begin(), order.end(), 0u);
      const auto& col = columns_[f];
      std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        const bool ma = is_missing(col[a]), mb = is_missing(col[b]);
        if (ma != mb) return mb;
        return !ma && col[a] < col[b];
      });
    }
  }

  std::size_t rows() const { return n_rows_; }
  std::size_t cols() const { return columns_.size(); }
  const std::vector<double>& column(std::size_t f) const { return columns_[f]; }
  const std::vector<std::uint32_t>& sorted(std::size_t f) const { return sorted_[f]; }

 private:
  std::size_t n_rows_;
  std::vector<std::vector<double>> columns_;
  std::vector<std::vector<std::uint32_t>> sorted_;
};

// ---------------------------------------------------------------------------
// Criteria. score() is chosen so that gain = score(L) + score(R) - score(P).
// ---------------------------------------------------------------------------

struct VarianceCriterion {
  struct Stats {
    double w = 0.0, wy = 0.0;
  };
  std::span<const double> y, weight;

  void add(Stats& s, std::uint32_t i) const {
    s.w += weight[i];
    s.wy += weight[i] * y[i];
  }
  static Stats minus(const Stats& a, const Stats& b) { return {a.w - b.w, a.wy - b.wy}; }
  static Stats plus(const Stats& a, const Stats& b) { return {a.w + b.w, a.wy + b.wy}; }
  static double count(const Stats& s) { return s.w; }
  double score(const Stats& s) const { return s.w > 0 ? s.wy * s.wy / s.w : 0.0; }
  double penalty() const { return 0.0; }
  void make_leaf(TreeNode& n, const Stats& s) const { n.value = s.w > 0 ? s.wy / s.w : 0.0; }
};

inline constexpr int kMaxClasses = 16;

struct GiniCriterion {
  struct Stats {
    double w = 0.0;
    std::array<double, kMaxClasses> c{};
  };
  std::span<const double> y, weight;
  int n_classes = 0;

  void add(Stats& s, std::uint32_t i) const {
    s.w += weight[i];
    s.c[static_cast<std::size_t>(y[i])] += weight[i];
  }
  Stats minus(const Stats& a, const Stats& b) const {
    Stats r;
    r.w = a.w - b.w;
    for (int k = 0; k < n_classes; ++k) r.c[k] = a.c[k] - b.c[k];
    return r;
  }
  Stats plus(const Stats& a, const Stats& b) const {
    Stats r;
    r.w = a.w + b.w;
    for (int k = 0; k < n_classes; ++k) r.c[k] = a.c[k] + b.c[k];
    return r;
  }
  static double count(const Stats& s) { return s.w; }
  // w * (1 - gini) = sum c_k^2 / w; the decrease in weighted Gini impurity
  // equals score(L) + score(R) - score(P).
  double score(const Stats& s) const {
    if (s.w <= 0) return 0.0;
    double ss = 0.0;
    for (int k = 0; k < n_classes; ++k) ss += s.c[k] * s.c[k];
    return ss / s.w;
  }
  double penalty() const { return 0.0; }
  void make_leaf(TreeNode& n, const Stats& s) const {
    n.dist.assign(static_cast<std::size_t>(n_classes), 0.0);
    int best = 0;
    for (int k = 0; k < n_classes; ++k) {
      n.dist[k] = s.w > 0 ? s.c[k] / s.w : 0.0;
      if (n.dist[k] > n.dist[best]) best = k;
    }
    n.value = best;
  }
};

inline double soft_threshold(double g, double alpha) {
  if (g > alpha) return g - alpha;
  if (g < -alpha) return g + alpha;
  return 0.0;
}

struct GradientCriterion {
  struct Stats {
    double n = 0.0, g = 0.0, h = 0.0;
  };
  std::span<const double> grad, hess, weight;
  double lambda = 1.0, alpha = 0.0, gamma = 0.0;

  void add(Stats& s, std::uint32_t i) const {
    s.n += weight[i];
    s.g += weight[i] * grad[i];
    s.h += weight[i] * hess[i];
  }
  static Stats minus(const Stats& a, const Stats& b) { return {a.n - b.n, a.g - b.g, a.h - b.h}; }
  static Stats plus(const Stats& a, const Stats& b) { return {a.n + b.n, a.g + b.g, a.h + b.h}; }
  static double count(const Stats& s) { return s.n; }
  double score(const Stats& s) const {
    const double denom = s.h + lambda;
    if (denom <= 0) return 0.0;
    const double t = soft_threshold(s.g, alpha);
    return 0.5 * t * t / denom;
  }
  double penalty() const { return gamma; }
  void make_leaf(TreeNode& n, const Stats& s) const {
    const double denom = s.h + lambda;
    n.value = denom > 0 ? -soft_threshold(s.g, alpha) / denom : 0.0;
  }
};

// ---------------------------------------------------------------------------
// Builder
// ---------------------------------------------------------------------------

inline constexpr double kMinSplitGain = 1e-12;

inline bool improves(double gain, double best) {
  if (!std::isfinite(best)) return gain > best;
  return gain > best + 1e-12 * std::max(1.0, std::abs(best));
}

template <class Crit>
class TreeBuilder {
 public:
  TreeBuilder(const TrainingData& data, const Crit& crit, const TreeParams& params, std::span<const double> weight,
              Rng* rng)
      : data_(data), crit_(crit), params_(params), weight_(weight), rng_(rng) {
    const std::size_t m = data.cols();
    if (params.max_features != -1 && (params.max_features < 1 || static_cast<std::size_t>(params.max_features) > m))
      throw InvalidArgument("max_features q must satisfy 1 <= q <= " + std::to_string(m));
    if (weight.size() != data.rows()) throw InvalidArgument("weights length must equal row count");
    order_.resize(m);
    for (std::size_t f = 0; f < m; ++f) {
      const auto& s = data.sorted(f);
      order_[f].reserve(s.size());
      for (auto i : s)
        if (weight[i] > 0) order_[f].push_back(i);
    }
    n_active_ = m == 0 ? 0 : order_[0].size();
    if (m == 0) {
      for (std::uint32_t i = 0; i < weight.size(); ++i)
        if (weight[i] > 0) rows_no_features_.push_back(i);
      n_active_ = rows_no_features_.size();
    }
    go_left_.assign(data.rows(), 0);
    buffer_.resize(n_active_);
  }

  Tree build() {
    Tree tree;
    if (n_active_ == 0) throw InvalidArgument("fit_tree: no rows with positive weight");
    tree.nodes.reserve(64);
    grow(tree, 0, n_active_, 0);
    return tree;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    bool default_left = true;
    double gain = 0.0;
  };

  typename Crit::Stats node_stats(std::size_t b, std::size_t e) const {
    typename Crit::Stats s{};
    if (order_.empty()) {
      for (std::size_t k = b; k < e; ++k) crit_.add(s, rows_no_features_[k]);
    } else {
      for (std::size_t k = b; k < e; ++k) crit_.add(s, order_[0][k]);
    }
    return s;
  }

  int grow(Tree& tree, std::size_t b, std::size_t e, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const auto total = node_stats(b, e);
    {
      auto& node = tree.nodes[id];
      node.cover = Crit::count(total);
      crit_.make_leaf(node, total);
    }
    const bool depth_ok = params_.max_depth < 0 || depth < params_.max_depth;
    if (!depth_ok || Crit::count(total) < 2.0 * params_.min_leaf || order_.empty()) return id;

    const Split best = find_split(b, e, total);
    if (best.feature < 0 || !(best.gain > kMinSplitGain)) return id;

    // Mark rows, then stable-partition every feature's ordering.
    const auto& col = data_.column(static_cast<std::size_t>(best.feature));
    std::size_t n_left = 0;
    for (std::size_t k = b; k < e; ++k) {
      const auto i = order_[0][k];
      const double v = col[i];
      const bool left = is_missing(v) ? best.default_left : v < best.threshold;
      go_left_[i] = left;
      n_left += left;
    }
    if (n_left == 0 || n_left == e - b) return id;
    for (auto& ord : order_) {
      std::size_t l = b, r = 0;
      for (std::size_t k = b; k < e; ++k) {
        const auto i = ord[k];
        if (go_left_[i]) ord[l++] = i;
        else buffer_[r++] = i;
      }
      std::copy_n(buffer_.begin(), r, ord.begin() + static_cast<std::ptrdiff_t>(l));
    }

    tree.nodes[id].feature = best.feature;
    tree.nodes[id].threshold = best.threshold;
    tree.nodes[id].default_left = best.default_left;
    tree.nodes[id].dist.clear();
    const int l = grow(tree, b, b + n_left, depth + 1);
    const int r = grow(tree, b + n_left, e, depth + 1);
    tree.nodes[id].left = l;
    tree.nodes[id].right = r;
    return id;
  }

  Split find_split(std::size_t b, std::size_t e, const typename Crit::Stats& total) {
    const std::size_t m = data_.cols();
    std::vector<std::size_t> candidates;
    if (params_.max_features == -1 || static_cast<std::size_t>(params_.max_features) == m) {
      candidates.resize(m);
      std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    } else {
      if (!rng_) throw InvalidArgument("feature subsampling requires a random stream");
      candidates = rng_->sample_without_replacement(m, static_cast<std::size_t>(params_.max_features));
    }

    Split best;
    best.gain = -std::numeric_limits<double>::infinity();
    const double parent = crit_.score(total);
    const double penalty = crit_.penalty();
    const double min_leaf = params_.min_leaf;

    for (auto f : candidates) {
      const auto& ord = order_[f];
      const auto& col = data_.column(f);
      std::size_t end_present = e;
      while (end_present > b && is_missing(col[ord[end_present - 1]])) --end_present;
      if (end_present - b < 2) continue;
      typename Crit::Stats miss{};
      for (std::size_t k = end_present; k < e; ++k) crit_.add(miss, ord[k]);
      const bool has_missing = end_present < e;
      const auto present = crit_.minus(total, miss);

      typename Crit::Stats left{};
      for (std::size_t k = b; k + 1 < end_present; ++k) {
        const auto i = ord[k];
        crit_.add(left, i);
        const double v = col[i], next = col[ord[k + 1]];
        if (!(next > v)) continue;
        double thr = 0.5 * (v + next);
        if (!(thr > v)) thr = next;
        const auto right = crit_.minus(present, left);

        auto consider = [&](const typename Crit::Stats& L, const typename Crit::Stats& R, bool default_left) {
          if (Crit::count(L) < min_leaf || Crit::count(R) < min_leaf) return;
          const double gain = crit_.score(L) + crit_.score(R) - parent - penalty;
          if (improves(gain, best.gain)) best = {static_cast<int>(f), thr, default_left, gain};
        };
        if (has_missing) {
          consider(crit_.plus(left, miss), right, true);
          consider(left, crit_.plus(right, miss), false);
        } else {
          consider(left, right, Crit::count(left) >= Crit::count(right));
        }
      }
    }
    return best;
  }

  const TrainingData& data_;
  const Crit& crit_;
  TreeParams params_;
  std::span<const double> weight_;
  Rng* rng_;
  std::vector<std::vector<std::uint32_t>> order_;
  std::vector<std::uint32_t> rows_no_features_;
  std::size_t n_active_ = 0;
  std::vector<char> go_left_;
  std::vector<std::uint32_t> buffer_;
};

template <class Crit>
Tree build_tree(const TrainingData& data, const Crit& crit, const TreeParams& params, std::span<const double> weight,
                Rng* rng) {
  return TreeBuilder<Crit>(data, crit, params, weight, rng).build();
}

// Regression (variance) or classification (Gini; y holds class indices) tree.
inline Tree fit_tree(const TrainingData& data, std::span<const double> y, std::span<const double> weights,
                     const TreeParams& params, Rng* rng = nullptr) {
  if (y.size() != data.rows() || weights.size() != data.rows() || y.empty())
    throw InvalidArgument("fit_tree: |X|, |y| and |weights| must agree and be positive");
  if (params.criterion == SplitCriterion::Gini) {
    if (params.n_classes < 1 || params.n_classes > kMaxClasses)
      throw InvalidArgument("Gini tree needs 1 <= n_classes <= " + std::to_string(kMaxClasses));
    for (double c : y)
      if (c < 0 || c >= params.n_classes || c != std::floor(c)) throw InvalidArgument("class label out of range");
    GiniCriterion crit{y, weights, params.n_classes};
    return build_tree(data, crit, params, weights, rng);
  }
  VarianceCriterion crit{y, weights};
  return build_tree(data, crit, params, weights, rng);
}

inline Tree fit_tree(const Matrix& X, std::span<const double> y, std::span<const double> weights,
                     const TreeParams& params, Rng* rng = nullptr) {
  if (X.rows() != y.size()) throw InvalidArgument("fit_tree: |X| != |y|");
  return fit_tree(TrainingData(X), y, weights, params, rng);
}

}  // namespace cspread
